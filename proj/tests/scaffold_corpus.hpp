#pragma once

#include <string>
#include <vector>

// Curated molecules, each written two ways, with the scaffold pruned by hand.
// An empty scaffold string means the molecule has no ring.
struct ScaffoldCase {
  std::string name;
  std::string smiles;
  std::string rewritten;
  std::string scaffold;
};

inline const std::vector<ScaffoldCase>& scaffold_corpus() {
  static const std::vector<ScaffoldCase> cases = {
      {"ethanol", "CCO", "OCC", ""},
      {"acrylic acid", "C=CC(=O)O", "OC(=O)C=C", ""},
      {"ethylbenzene", "CCc1ccccc1", "c1ccc(CC)cc1", "c1ccccc1"},
      {"paracetamol", "CC(=O)Nc1ccc(O)cc1", "Oc1ccc(NC(C)=O)cc1", "c1ccccc1"},
      {"aspirin", "CC(=O)Oc1ccccc1C(=O)O", "OC(=O)c1ccccc1OC(C)=O", "c1ccccc1"},
      {"ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O", "OC(=O)C(C)c1ccc(CC(C)C)cc1", "c1ccccc1"},
      {"benzonitrile", "N#Cc1ccccc1", "c1ccc(C#N)cc1", "c1ccccc1"},
      {"stereo amine", "C[C@H](N)c1ccccc1", "N[C@@H](C)c1ccccc1", "c1ccccc1"},
      {"4-methylpyridine", "Cc1ccncc1", "c1cc(C)ccn1", "c1ccncc1"},
      {"pyridine N-oxide", "[O-][n+]1ccccc1", "c1cc[n+]([O-])cc1", "c1ccncc1"},
      {"diaminopyrimidine", "Nc1ccnc(N)n1", "Nc1nccc(N)n1", "c1cncnc1"},
      {"ethylthiophene", "CCc1cccs1", "s1cccc1CC", "c1ccsc1"},
      {"cyclohexanol", "OC1CCCCC1", "C1CCC(O)CC1", "C1CCCCC1"},
      {"methylcyclopropane", "CC1CC1", "C1CC1C", "C1CC1"},
      {"acetylmorpholine", "CC(=O)N1CCOCC1", "O1CCN(C(C)=O)CC1", "C1COCCN1"},
      {"methylnaphthalene", "Cc1ccc2ccccc2c1", "c1ccc2cc(C)ccc2c1", "c1ccc2ccccc2c1"},
      {"methoxyquinoline", "COc1ccc2ncccc2c1", "c1cc2cc(OC)ccc2nc1", "c1ccc2ncccc2c1"},
      {"skatole", "Cc1c[nH]c2ccccc12", "c1ccc2c(c1)c(C)c[nH]2", "c1ccc2[nH]ccc2c1"},
      {"caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C", "O=c1n(C)c(=O)c2c(ncn2C)n1C", "n1cnc2c1cncn2"},
      {"methyltetralin", "CC1CCc2ccccc2C1", "c1ccc2c(c1)CC(C)CC2", "c1ccc2c(c1)CCCC2"},
      {"methylfluorene", "CC1c2ccccc2-c2ccccc21", "c1ccc2c(c1)C(C)c1ccccc1-2", "c1ccc2c(c1)Cc1ccccc1-2"},
      {"methylspirodecane", "CC1CCC2(CC1)CCCC2", "C1CCC2(C1)CCC(C)CC2", "C1CCC2(CC1)CCCC2"},
      {"methylnorbornane", "CC1CC2CCC1C2", "C1CC2CC1CC2C", "C1CC2CCC1C2"},
      {"bibenzyl", "c1ccccc1CCc1ccccc1", "c1ccc(cc1)CCc1ccccc1", "c1ccc(CCc2ccccc2)cc1"},
      {"benzophenone", "O=C(c1ccccc1)c1ccccc1", "c1ccc(cc1)C(=O)c1ccccc1", "c1ccc(Cc2ccccc2)cc1"},
      {"chlorobiphenyl", "Clc1ccc(-c2ccccc2)cc1", "c1ccc(cc1)-c1ccc(Cl)cc1", "c1ccc(-c2ccccc2)cc1"},
      {"bromophenylcyclohexane", "Brc1ccc(cc1)C1CCCCC1", "C1CCCCC1c1ccc(Br)cc1", "c1ccc(C2CCCCC2)cc1"},
      {"diphenoxyethane", "c1ccccc1OCCOc1ccccc1", "c1ccc(OCCOc2ccccc2)cc1", "c1ccc(OCCOc2ccccc2)cc1"},
      {"phenylpiperazine", "CN1CCN(CC1)c1ccccc1", "c1ccc(cc1)N1CCN(C)CC1", "c1ccc(N2CCNCC2)cc1"},
      {"furfuryl amide", "Cc1ccc(CC(=O)NCc2ccco2)cc1", "O=C(Cc1ccc(C)cc1)NCc1ccco1", "c1ccc(CCNCc2ccco2)cc1"},
      {"ring closure %nn", "CC%10CCCCC%10", "C%12CCCC(C)C%12", "C1CCCCC1"},
  };
  return cases;
}

// Pairs whose scaffolds differ as labeled graphs.
inline const std::vector<std::pair<std::string, std::string>>& distinct_scaffold_pairs() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"c1ccccc1", "c1ccncc1"},
      {"c1ccccc1", "C1CCCCC1"},
      {"c1ccc(CCc2ccccc2)cc1", "c1ccc(-c2ccccc2)cc1"},
      {"c1ccc(CCc2ccccc2)cc1", "c1ccc(Cc2ccccc2)cc1"},
      {"c1ccc2[nH]ccc2c1", "c1ccc2[nH]cnc2c1"},
      {"c1ccc2ncccc2c1", "c1ccc2cnccc2c1"},
      {"c1ccncc1", "c1cnccn1"},
      {"C1CCOCC1", "C1CCNCC1"},
      {"C1CC2CCC1C2", "C1CCC2(CC1)CCCC2"},
      {"c1ccc(OCCOc2ccccc2)cc1", "c1ccc(OCOCc2ccccc2)cc1"},
      {"C1=CC=CC=C1", "c1ccccc1"},
  };
  return pairs;
}
