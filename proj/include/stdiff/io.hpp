#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stdiff/core.hpp"
#include "stdiff/params.hpp"

// On-disk artifacts. Checkpoints and sample sets are directories holding a
// manifest.json plus one flat binary of little-endian 32-bit floats, so other
// tooling can read them without this library.

namespace stdiff {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace detail {

inline void write_f32(std::ofstream& out, const Matrix& m) {
  // row-major element order
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float f = static_cast<float>(m(i, j));
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
}

inline void read_f32(std::ifstream& in, Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), sizeof(float));
      if (!in) throw SpecError("artifact: binary file truncated");
      m(i, j) = static_cast<Scalar>(f);
    }
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw SpecError("artifact: cannot open " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("artifact: bad manifest " + p.string() + ": " + e.what());
  }
  return j;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw SpecError("artifact: cannot write " + p.string());
  out << j.dump(2) << "\n";
}

}  // namespace detail

struct ScalingMeta {
  RowVector scale_min;
  RowVector scale_max;
  std::vector<std::string> feature_names;
};

inline nlohmann::json scaling_to_json(const ScalingMeta& m) {
  std::vector<Scalar> lo(m.scale_min.data(), m.scale_min.data() + m.scale_min.size());
  std::vector<Scalar> hi(m.scale_max.data(), m.scale_max.data() + m.scale_max.size());
  return {{"min", lo}, {"max", hi}, {"feature_names", m.feature_names}};
}

inline ScalingMeta scaling_from_json(const nlohmann::json& j) {
  ScalingMeta m;
  auto lo = j.at("min").get<std::vector<Scalar>>();
  auto hi = j.at("max").get<std::vector<Scalar>>();
  m.scale_min = Eigen::Map<const RowVector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  m.scale_max = Eigen::Map<const RowVector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  if (j.contains("feature_names"))
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  return m;
}

// ---- checkpoints: manifest.json + params.bin (floats in manifest order) ----

inline void save_checkpoint(const std::string& dir, const ParamStore& store,
                            const nlohmann::json& config,
                            const ScalingMeta& scaling) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "stdiffusion-checkpoint";
  manifest["dtype"] = "float32";
  nlohmann::json params = nlohmann::json::array();
  std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw SpecError("checkpoint: cannot write params.bin");
  for (const auto& [name, v] : store.items) {
    params.push_back({{"name", name},
                      {"rows", v->value.rows()},
                      {"cols", v->value.cols()}});
    detail::write_f32(bin, v->value);
  }
  manifest["params"] = params;
  manifest["config"] = config;
  manifest["config_hash"] = fnv1a64(config.dump());
  manifest["scaling"] = scaling_to_json(scaling);
  detail::write_json(fs::path(dir) / "manifest.json", manifest);
}

struct CheckpointHeader {
  nlohmann::json manifest;
  nlohmann::json config;
  ScalingMeta scaling;
};

inline CheckpointHeader read_checkpoint_header(const std::string& dir) {
  namespace fs = std::filesystem;
  CheckpointHeader h;
  h.manifest = detail::read_json(fs::path(dir) / "manifest.json");
  if (h.manifest.value("format", "") != "stdiffusion-checkpoint")
    throw SpecError("checkpoint: not a checkpoint directory: " + dir);
  h.config = h.manifest.at("config");
  h.scaling = scaling_from_json(h.manifest.at("scaling"));
  return h;
}

// Fills an already-constructed store; names, order, and shapes must match.
inline void load_checkpoint_params(const std::string& dir,
                                   const CheckpointHeader& header,
                                   ParamStore& store) {
  namespace fs = std::filesystem;
  const auto& params = header.manifest.at("params");
  if (params.size() != store.items.size())
    throw SpecError("checkpoint: parameter count mismatch");
  std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
  if (!bin) throw SpecError("checkpoint: cannot open params.bin");
  for (std::size_t i = 0; i < store.items.size(); ++i) {
    const auto& entry = params[i];
    auto& [name, v] = store.items[i];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != v->value.rows() ||
        entry.at("cols").get<Eigen::Index>() != v->value.cols())
      throw SpecError("checkpoint: layout mismatch at '" + name + "'");
    detail::read_f32(bin, v->value);
  }
  char extra;
  if (bin.read(&extra, 1))
    throw SpecError("checkpoint: params.bin larger than manifest layout");
}

// ---- sample sets: manifest.json + samples.bin (row-major n x L x K) ----

inline void save_samples(const std::string& dir,
                         const std::vector<Matrix>& windows, Eigen::Index L,
                         Eigen::Index K, const ScalingMeta& scaling,
                         std::uint64_t config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!bin) throw SpecError("samples: cannot write samples.bin");
  for (const Matrix& w : windows) {
    if (w.rows() != L || w.cols() != K)
      throw SpecError("samples: window shape mismatch");
    detail::write_f32(bin, w);
  }
  nlohmann::json manifest;
  manifest["format"] = "stdiffusion-samples";
  manifest["dtype"] = "float32";
  manifest["shape"] = {windows.size(), L, K};
  manifest["scaling"] = scaling_to_json(scaling);
  manifest["config_hash"] = config_hash;
  detail::write_json(fs::path(dir) / "manifest.json", manifest);
}

struct SamplesArtifact {
  std::vector<Matrix> windows;
  ScalingMeta scaling;
  nlohmann::json manifest;
};

inline SamplesArtifact load_samples(const std::string& dir) {
  namespace fs = std::filesystem;
  SamplesArtifact a;
  a.manifest = detail::read_json(fs::path(dir) / "manifest.json");
  if (a.manifest.value("format", "") != "stdiffusion-samples")
    throw SpecError("samples: not a samples directory: " + dir);
  a.scaling = scaling_from_json(a.manifest.at("scaling"));
  const auto shape = a.manifest.at("shape");
  const std::size_t n = shape.at(0).get<std::size_t>();
  const Eigen::Index L = shape.at(1).get<Eigen::Index>();
  const Eigen::Index K = shape.at(2).get<Eigen::Index>();
  std::ifstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
  if (!bin && n > 0) throw SpecError("samples: cannot open samples.bin");
  for (std::size_t i = 0; i < n; ++i) {
    Matrix w(L, K);
    detail::read_f32(bin, w);
    a.windows.push_back(std::move(w));
  }
  return a;
}

}  // namespace stdiff
