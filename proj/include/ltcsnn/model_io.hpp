#pragma once

// Two-file model container: a JSON manifest describing the model and its
// tensors, plus a raw little-endian float32 blob (`<manifest stem>.bin`).

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/events.hpp"
#include "ltcsnn/network.hpp"

namespace ltcsnn {

inline constexpr int kModelFormatVersion = 1;

enum class ModelIoErrorKind {
  io,
  malformed,
  version_mismatch,
  checksum_mismatch,
  shape_mismatch,
  unknown_tensor,
  missing_tensor,
  unsupported_dtype,
  overlapping_tensors,
  out_of_bounds,
};

inline const char* to_string(ModelIoErrorKind k) {
  switch (k) {
    case ModelIoErrorKind::io: return "io";
    case ModelIoErrorKind::malformed: return "malformed";
    case ModelIoErrorKind::version_mismatch: return "version_mismatch";
    case ModelIoErrorKind::checksum_mismatch: return "checksum_mismatch";
    case ModelIoErrorKind::shape_mismatch: return "shape_mismatch";
    case ModelIoErrorKind::unknown_tensor: return "unknown_tensor";
    case ModelIoErrorKind::missing_tensor: return "missing_tensor";
    case ModelIoErrorKind::unsupported_dtype: return "unsupported_dtype";
    case ModelIoErrorKind::overlapping_tensors: return "overlapping_tensors";
    case ModelIoErrorKind::out_of_bounds: return "out_of_bounds";
  }
  return "?";
}

struct ManifestIssue {
  ModelIoErrorKind kind;
  std::string message;
};

class ModelIoError : public DataError {
 public:
  ModelIoError(ModelIoErrorKind kind, const std::string& what)
      : DataError(std::string(to_string(kind)) + ": " + what), kind(kind) {}
  ModelIoErrorKind kind;
};

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype = "f32";
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest).replace_extension(".bin");
}

/// Canonical tensor names and shapes, in blob order.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(
    const ModelSpec& spec) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.push_back({p + "w_in", {l.in_dim, l.width}});
    out.push_back({p + "w_rec", {l.width, l.width}});
    out.push_back({p + "b_in", {l.width}});
    if (l.kind == NeuronKind::ltc) {
      out.push_back({p + "w_tau_m", {2 * l.width, l.width}});
      out.push_back({p + "w_tau_adp", {2 * l.width, l.width}});
      out.push_back({p + "b_tau_m", {l.width}});
      out.push_back({p + "b_tau_adp", {l.width}});
    }
  }
  out.push_back({"readout.w_out", {spec.layers.back().width, spec.num_classes}});
  out.push_back({"readout.b_out", {spec.num_classes}});
  return out;
}

namespace detail {

using ojson = nlohmann::ordered_json;

template <std::floating_point T>
ojson layer_params_json(const LayerWeights<T>& l) {
  ojson p;
  switch (l.kind) {
    case NeuronKind::lif:
      p = {{"tau_m", l.lif.tau_m}, {"r_m", l.lif.r_m}, {"theta", l.lif.theta},
           {"u_reset", l.lif.u_reset}};
      break;
    case NeuronKind::alif:
      p = {{"alpha", l.alif.alpha}, {"rho", l.alif.rho}, {"r_m", l.alif.r_m},
           {"b0", l.alif.b0},       {"beta", l.alif.beta}, {"dt", l.alif.dt},
           {"u_reset", l.alif.u_reset}};
      break;
    case NeuronKind::ltc:
      p = {{"b0", l.ltc.b0}, {"beta", l.ltc.beta}, {"u_rest", l.ltc.u_rest}};
      break;
  }
  return p;
}

template <std::floating_point T>
void apply_layer_params(const nlohmann::json& p, LayerWeights<T>& l) {
  switch (l.kind) {
    case NeuronKind::lif:
      l.lif = {p.at("tau_m").get<T>(), p.at("r_m").get<T>(), p.at("theta").get<T>(),
               p.at("u_reset").get<T>()};
      break;
    case NeuronKind::alif:
      l.alif = {p.at("alpha").get<T>(), p.at("rho").get<T>(), p.at("r_m").get<T>(),
                p.at("b0").get<T>(),    p.at("beta").get<T>(), p.at("dt").get<T>(),
                p.at("u_reset").get<T>()};
      break;
    case NeuronKind::ltc:
      l.ltc = {p.at("b0").get<T>(), p.at("beta").get<T>(), p.at("u_rest").get<T>()};
      break;
  }
}

inline ModelSpec spec_from_json(const nlohmann::json& js) {
  ModelSpec spec;
  const auto shape = js.at("input_shape").get<std::vector<std::size_t>>();
  if (shape.size() != 3) throw ConfigError("input_shape must have 3 entries");
  spec.input_shape = {shape[0], shape[1], shape[2]};
  spec.num_classes = js.at("num_classes").get<std::size_t>();
  spec.readout_tau = js.at("readout_tau").get<double>();
  for (const auto& l : js.at("layers"))
    spec.layers.push_back({l.at("in_dim").get<std::size_t>(), l.at("width").get<std::size_t>(),
                           neuron_kind_from_string(l.at("neuron_kind").get<std::string>())});
  return spec;
}

template <std::floating_point T>
std::vector<std::pair<std::string, const std::vector<T>*>> tensor_storage(
    const BasicModel<T>& m) {
  std::vector<std::pair<std::string, const std::vector<T>*>> out;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& l = m.layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    out.push_back({p + "w_in", &l.w_in.storage()});
    out.push_back({p + "w_rec", &l.w_rec.storage()});
    out.push_back({p + "b_in", &l.b_in});
    if (l.kind == NeuronKind::ltc) {
      out.push_back({p + "w_tau_m", &l.tau_weights.w_tau_m.storage()});
      out.push_back({p + "w_tau_adp", &l.tau_weights.w_tau_adp.storage()});
      out.push_back({p + "b_tau_m", &l.tau_weights.bias_tau_m});
      out.push_back({p + "b_tau_adp", &l.tau_weights.bias_tau_adp});
    }
  }
  out.push_back({"readout.w_out", &m.readout.w_out.storage()});
  out.push_back({"readout.b_out", &m.readout.b_out});
  return out;
}

template <std::floating_point T>
std::vector<T>* mutable_tensor(BasicModel<T>& m, const std::string& name) {
  for (auto& [n, ptr] : tensor_storage<T>(m))
    if (n == name) return const_cast<std::vector<T>*>(ptr);
  return nullptr;
}

}  // namespace detail

inline nlohmann::ordered_json spec_to_json(const Model& m) {
  detail::ojson layers = detail::ojson::array();
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const auto& l = m.spec.layers[i];
    layers.push_back({{"in_dim", l.in_dim},
                      {"width", l.width},
                      {"neuron_kind", to_string(l.kind)},
                      {"params", detail::layer_params_json(m.layers[i])}});
  }
  return {{"input_shape", m.spec.input_shape},
          {"num_classes", m.spec.num_classes},
          {"readout_tau", m.spec.readout_tau},
          {"layers", layers}};
}

/// Checks a parsed manifest and reports every problem found. `blob_size`,
/// when known, enables the bounds check.
inline std::vector<ManifestIssue> validate_manifest(const nlohmann::json& js,
                                                    std::optional<std::uint64_t> blob_size = {}) {
  std::vector<ManifestIssue> issues;
  auto add = [&](ModelIoErrorKind k, std::string msg) { issues.push_back({k, std::move(msg)}); };

  for (const char* key : {"format_version", "model_spec", "tensors", "checksum"})
    if (!js.contains(key)) add(ModelIoErrorKind::malformed, std::string("missing field '") + key + "'");
  if (!issues.empty()) return issues;

  if (!js["format_version"].is_number_integer() ||
      js["format_version"].get<int>() != kModelFormatVersion)
    add(ModelIoErrorKind::version_mismatch,
        "format_version " + js["format_version"].dump() + ", expected " +
            std::to_string(kModelFormatVersion));

  std::optional<ModelSpec> spec;
  try {
    spec = detail::spec_from_json(js["model_spec"]);
    spec->validate();
  } catch (const std::exception& e) {
    add(ModelIoErrorKind::malformed, std::string("model_spec: ") + e.what());
    spec.reset();
  }

  std::vector<TensorEntry> entries;
  if (!js["tensors"].is_array()) {
    add(ModelIoErrorKind::malformed, "tensors must be an array");
    return issues;
  }
  for (const auto& t : js["tensors"]) {
    try {
      entries.push_back({t.at("name").get<std::string>(),
                         t.at("shape").get<std::vector<std::size_t>>(),
                         t.at("dtype").get<std::string>(), t.at("byte_offset").get<std::uint64_t>(),
                         t.at("byte_length").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      add(ModelIoErrorKind::malformed, std::string("tensor entry: ") + e.what());
    }
  }

  for (const auto& e : entries) {
    if (e.dtype != "f32")
      add(ModelIoErrorKind::unsupported_dtype, e.name + ": unsupported dtype '" + e.dtype + "'");
    std::uint64_t elems = 1;
    for (auto d : e.shape) elems *= d;
    if (e.dtype == "f32" && elems * 4 != e.byte_length)
      add(ModelIoErrorKind::shape_mismatch,
          e.name + ": byte_length " + std::to_string(e.byte_length) + " does not match shape");
    if (blob_size && e.byte_offset + e.byte_length > *blob_size)
      add(ModelIoErrorKind::out_of_bounds, e.name + ": extends past end of blob");
  }

  std::vector<const TensorEntry*> sorted;
  for (const auto& e : entries) sorted.push_back(&e);
  for (std::size_t i = 0; i + 1 < entries.size(); ++i)
    if (entries[i + 1].byte_offset < entries[i].byte_offset)
      add(ModelIoErrorKind::malformed, entries[i + 1].name + ": byte offsets not ascending");
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto* a, auto* b) { return a->byte_offset < b->byte_offset; });
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      if (sorted[j]->byte_offset >= sorted[i]->byte_offset + sorted[i]->byte_length) break;
      if (sorted[i]->byte_length == 0 || sorted[j]->byte_length == 0) continue;
      add(ModelIoErrorKind::overlapping_tensors,
          "tensors '" + sorted[i]->name + "' and '" + sorted[j]->name + "' overlap");
    }

  if (spec) {
    const auto expected = expected_tensors(*spec);
    std::map<std::string, std::vector<std::size_t>> want(expected.begin(), expected.end());
    std::map<std::string, int> seen;
    for (const auto& e : entries) {
      ++seen[e.name];
      auto it = want.find(e.name);
      if (it == want.end())
        add(ModelIoErrorKind::unknown_tensor, "unknown tensor '" + e.name + "'");
      else if (it->second != e.shape)
        add(ModelIoErrorKind::shape_mismatch, e.name + ": shape does not match model_spec");
    }
    for (const auto& [name, shape] : expected)
      if (!seen.contains(name))
        add(ModelIoErrorKind::missing_tensor, "missing tensor '" + name + "'");
    for (const auto& [name, n] : seen)
      if (n > 1) add(ModelIoErrorKind::malformed, "duplicate tensor '" + name + "'");
  }
  return issues;
}

/// Writes `manifest` (JSON) and its blob next to it. Output bytes are a pure
/// function of the model.
inline void save_model(const Model& model, const std::filesystem::path& manifest) {
  model.check();
  std::string blob;
  detail::ojson tensors = detail::ojson::array();
  const auto shapes = expected_tensors(model.spec);
  const auto storage = detail::tensor_storage<float>(model);
  for (std::size_t i = 0; i < storage.size(); ++i) {
    const auto& [name, data] = storage[i];
    const std::uint64_t offset = blob.size();
    blob.append(reinterpret_cast<const char*>(data->data()), data->size() * sizeof(float));
    tensors.push_back({{"name", name},
                       {"shape", shapes[i].second},
                       {"dtype", "f32"},
                       {"byte_offset", offset},
                       {"byte_length", data->size() * sizeof(float)}});
  }
  detail::ojson js;
  js["format_version"] = kModelFormatVersion;
  js["model_spec"] = spec_to_json(model);
  js["tensors"] = tensors;
  js["checksum"] = crc32_of(blob);
  try {
    detail::write_file(blob_path_for(manifest), blob);
    detail::write_file(manifest, js.dump(2) + "\n");
  } catch (const DataError& e) {
    throw ModelIoError(ModelIoErrorKind::io, e.what());
  }
}

inline nlohmann::json read_manifest(const std::filesystem::path& manifest) {
  std::string text;
  try {
    text = detail::read_file(manifest);
  } catch (const DataError& e) {
    throw ModelIoError(ModelIoErrorKind::io, e.what());
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ModelIoError(ModelIoErrorKind::malformed, e.what());
  }
}

/// Loads and fully validates a model. The checksum is verified before any
/// tensor is copied out of the blob.
inline Model load_model(const std::filesystem::path& manifest) {
  const auto js = read_manifest(manifest);
  std::string blob;
  try {
    blob = detail::read_file(blob_path_for(manifest));
  } catch (const DataError& e) {
    throw ModelIoError(ModelIoErrorKind::io, e.what());
  }

  if (js.contains("format_version") &&
      (!js["format_version"].is_number_integer() ||
       js["format_version"].get<int>() != kModelFormatVersion))
    throw ModelIoError(ModelIoErrorKind::version_mismatch,
                       "format_version " + js["format_version"].dump() + " is not supported");
  const auto issues = validate_manifest(js, blob.size());
  if (!issues.empty()) throw ModelIoError(issues.front().kind, issues.front().message);

  const auto stored = js["checksum"].get<std::uint32_t>();
  const auto actual = crc32_of(blob);
  if (stored != actual)
    throw ModelIoError(ModelIoErrorKind::checksum_mismatch,
                       "blob CRC-32 " + std::to_string(actual) + " != manifest " +
                           std::to_string(stored));

  const ModelSpec spec = detail::spec_from_json(js["model_spec"]);
  Model m = Model::zeros(spec);
  const auto& layers_js = js["model_spec"]["layers"];
  try {
    for (std::size_t i = 0; i < m.layers.size(); ++i)
      if (layers_js[i].contains("params"))
        detail::apply_layer_params(layers_js[i]["params"], m.layers[i]);
  } catch (const nlohmann::json::exception& e) {
    throw ModelIoError(ModelIoErrorKind::malformed, std::string("layer params: ") + e.what());
  }
  for (const auto& t : js["tensors"]) {
    const auto name = t["name"].get<std::string>();
    auto* dst = detail::mutable_tensor<float>(m, name);
    if (!dst) throw ModelIoError(ModelIoErrorKind::unknown_tensor, name);
    const auto offset = t["byte_offset"].get<std::uint64_t>();
    const auto length = t["byte_length"].get<std::uint64_t>();
    if (length != dst->size() * sizeof(float))
      throw ModelIoError(ModelIoErrorKind::shape_mismatch, name);
    std::memcpy(dst->data(), blob.data() + offset, length);
  }
  try {
    m.check();
  } catch (const std::exception& e) {
    throw ModelIoError(ModelIoErrorKind::malformed, e.what());
  }
  return m;
}

}  // namespace ltcsnn
