#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgp/error.hpp"
#include "kgp/io.hpp"
#include "kgp/models.hpp"
#include "kgp/tensor.hpp"

namespace kgp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedMatrix {
  std::string name;
  Matrix<float> value;
};

/// Parameters plus a JSON block holding the model config, optimizer settings
/// and the best-epoch record.
struct ModelCheckpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedMatrix> params;

  ModelConfig model_config() const { return ModelConfig::from_json(meta.at("model")); }
};

inline void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::Io, "cannot write " + path.string());
  os.write("DGCK", 4);
  io::write_le<std::uint32_t>(os, kCheckpointVersion);
  const auto js = ck.meta.dump();
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(js.size()));
  os.write(js.data(), static_cast<std::streamsize>(js.size()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rows));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.cols));
    io::write_floats(os, p.value.data.data(), p.value.size());
  }
  if (!os) throw Error(Errc::Io, "write failed for " + path.string());
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "DGCK") throw Error(Errc::Format, path.string() + " is not a DGCK checkpoint");
  auto version = io::read_le<std::uint32_t>(is, "checkpoint version");
  if (version != kCheckpointVersion) throw Error(Errc::Format, "unsupported checkpoint version " + std::to_string(version));
  ModelCheckpoint ck;
  auto read_string = [&](const std::string& what) {
    auto n = io::read_le<std::uint32_t>(is, what + " length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw Error(Errc::Format, "truncated " + what);
    return s;
  };
  ck.meta = nlohmann::json::parse(read_string("config block"));
  auto count = io::read_le<std::uint32_t>(is, "parameter count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedMatrix p;
    p.name = read_string("parameter name");
    auto rows = io::read_le<std::uint32_t>(is, "rows of " + p.name);
    auto cols = io::read_le<std::uint32_t>(is, "cols of " + p.name);
    p.value = Matrix<float>(rows, cols);
    io::read_floats(is, p.value.data.data(), p.value.size(), p.name);
    ck.params.push_back(std::move(p));
  }
  is.peek();
  if (!is.eof()) throw Error(Errc::Format, "trailing bytes in " + path.string());
  return ck;
}

/// Snapshot of every parameter (running statistics included), in registration order.
template <class Real>
std::vector<NamedMatrix> capture_params(const nn::ParamStore<Real>& store) {
  std::vector<NamedMatrix> out;
  for (const auto* p : store.all()) out.push_back({p->name, p->value.template cast<float>()});
  return out;
}

template <class Real>
void restore_params(nn::ParamStore<Real>& store, const std::vector<NamedMatrix>& params) {
  if (params.size() != store.size())
    throw Error(Errc::Format, "checkpoint has " + std::to_string(params.size()) + " parameters, model has " + std::to_string(store.size()));
  for (const auto& p : params) {
    auto& dst = store.at(p.name);
    if (dst.value.rows != p.value.rows || dst.value.cols != p.value.cols)
      throw Error(Errc::ShapeMismatch, p.name + ": checkpoint " + p.value.shape_string() + " vs model " + dst.value.shape_string());
    dst.value = p.value.template cast<Real>();
  }
}

/// Rebuilds the model described by the checkpoint and loads its parameters.
template <class Real>
std::unique_ptr<PerturbationModel<Real>> model_from_checkpoint(const ModelCheckpoint& ck) {
  auto model = make_model<Real>(ck.model_config());
  restore_params(model->params(), ck.params);
  return model;
}

}  // namespace kgp
