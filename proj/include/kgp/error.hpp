#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kgp {

enum class Errc {
  UnknownNodeType,
  DanglingEdgeEndpoint,
  FeatureShapeMismatch,
  NonFiniteFeature,
  UnknownEdgeType,
  UnclosedRing,
  UnbalancedParenthesis,
  UnknownAtomSymbol,
  EmptyInput,
  AllOneScaffold,
  DegenerateSplit,
  ShapeMismatch,
  EmptySegment,
  NonFiniteGradient,
  WidthMismatch,
  MissingSeedNode,
  NonFiniteLoss,
  LengthMismatch,
  KTooLarge,
  EmptyRecords,
  UnknownDrug,
  ParamDomain,
  UnknownId,
  Io,
  Format,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::UnknownNodeType: return "UnknownNodeType";
    case Errc::DanglingEdgeEndpoint: return "DanglingEdgeEndpoint";
    case Errc::FeatureShapeMismatch: return "FeatureShapeMismatch";
    case Errc::NonFiniteFeature: return "NonFiniteFeature";
    case Errc::UnknownEdgeType: return "UnknownEdgeType";
    case Errc::UnclosedRing: return "UnclosedRing";
    case Errc::UnbalancedParenthesis: return "UnbalancedParenthesis";
    case Errc::UnknownAtomSymbol: return "UnknownAtomSymbol";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::AllOneScaffold: return "AllOneScaffold";
    case Errc::DegenerateSplit: return "DegenerateSplit";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::EmptySegment: return "EmptySegment";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::WidthMismatch: return "WidthMismatch";
    case Errc::MissingSeedNode: return "MissingSeedNode";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::EmptyRecords: return "EmptyRecords";
    case Errc::UnknownDrug: return "UnknownDrug";
    case Errc::ParamDomain: return "ParamDomain";
    case Errc::UnknownId: return "UnknownId";
    case Errc::Io: return "Io";
    case Errc::Format: return "Format";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception. `what()` is
/// "<Code>: <detail>" so callers can print it on one line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace kgp
