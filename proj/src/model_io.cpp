#include "convad/model_io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace convad {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "blob reader assumes a little-endian host");

constexpr char kMagic[4] = {'A', 'D', 'W', '1'};
constexpr int kManifestVersion = 1;

std::size_t as_size(const json& node, const std::string& path) {
  if (!node.is_number_integer() || node.get<long long>() < 0) {
    throw SchemaError(path + ": expected a non-negative integer");
  }
  return node.get<std::size_t>();
}

// Accepts either a scalar or a [h, w] pair.
std::pair<std::size_t, std::size_t> as_pair(const json& node, const std::string& path) {
  if (node.is_array()) {
    if (node.size() != 2) throw SchemaError(path + ": expected [h, w]");
    return {as_size(node[0], path + "[0]"), as_size(node[1], path + "[1]")};
  }
  const std::size_t v = as_size(node, path);
  return {v, v};
}

ConvGeometry parse_geometry(const json& node, const std::string& path) {
  if (!node.is_object()) throw SchemaError(path + ": expected an object");
  ConvGeometry g;
  if (!node.contains("kernel")) throw SchemaError(path + ".kernel: missing");
  std::tie(g.kernel_h, g.kernel_w) = as_pair(node["kernel"], path + ".kernel");
  g.stride_h = g.stride_w = 1;
  if (node.contains("stride")) std::tie(g.stride_h, g.stride_w) = as_pair(node["stride"], path + ".stride");
  if (node.contains("pad")) std::tie(g.pad_h, g.pad_w) = as_pair(node["pad"], path + ".pad");
  if (node.contains("dilation")) {
    std::tie(g.dilation_h, g.dilation_w) = as_pair(node["dilation"], path + ".dilation");
  }
  if (node.contains("in_channels")) g.in_channels = as_size(node["in_channels"], path + ".in_channels");
  if (node.contains("out_channels")) g.out_channels = as_size(node["out_channels"], path + ".out_channels");
  try {
    g.validate();
  } catch (const GeometryError& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return g;
}

json geometry_to_json(const ConvGeometry& g, bool with_channels) {
  json node = {{"kernel", {g.kernel_h, g.kernel_w}},
               {"stride", {g.stride_h, g.stride_w}},
               {"pad", {g.pad_h, g.pad_w}},
               {"dilation", {g.dilation_h, g.dilation_w}}};
  if (with_channels) {
    node["in_channels"] = g.in_channels;
    node["out_channels"] = g.out_channels;
  }
  return node;
}

std::vector<float> parse_floats(const json& node, const std::string& path) {
  if (!node.is_array()) throw SchemaError(path + ": expected an array of numbers");
  std::vector<float> out;
  for (std::size_t i = 0; i < node.size(); ++i) {
    if (!node[i].is_number()) throw SchemaError(path + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(node[i].get<float>());
  }
  return out;
}

std::uint32_t read_u32(const std::string& bytes, std::size_t& offset, const char* what) {
  if (offset + 4 > bytes.size()) {
    throw IoError(std::string("blob truncated while reading ") + what + " at byte " +
                  std::to_string(offset));
  }
  std::uint32_t v = 0;
  std::memcpy(&v, bytes.data() + offset, 4);
  offset += 4;
  return v;
}

void append_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

}  // namespace

ModelGraph parse_manifest(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw SchemaError("manifest root must be an object");
  for (const char* key : {"version", "input_shape", "labels", "layers"}) {
    if (!root.contains(key)) throw SchemaError(std::string("manifest: missing key '") + key + "'");
  }
  if (!root["version"].is_number_integer() || root["version"].get<int>() != kManifestVersion) {
    throw SchemaError("manifest: version must be 1");
  }

  ModelGraph graph;
  const json& shape = root["input_shape"];
  if (!shape.is_array() || shape.size() != 3) throw SchemaError("input_shape: expected [C,H,W]");
  for (std::size_t i = 0; i < 3; ++i) {
    graph.input_shape.push_back(as_size(shape[i], "input_shape[" + std::to_string(i) + "]"));
  }
  if (!root["labels"].is_array()) throw SchemaError("labels: expected an array of strings");
  for (const auto& label : root["labels"]) {
    if (!label.is_string()) throw SchemaError("labels: expected an array of strings");
    graph.labels.push_back(label.get<std::string>());
  }
  if (root.contains("preprocess")) {
    const json& pre = root["preprocess"];
    if (!pre.is_object()) throw SchemaError("preprocess: expected an object");
    if (pre.contains("mean")) graph.preprocess.mean = parse_floats(pre["mean"], "preprocess.mean");
    if (pre.contains("std")) graph.preprocess.std = parse_floats(pre["std"], "preprocess.std");
  }

  const json& layers = root["layers"];
  if (!layers.is_array()) throw SchemaError("layers: expected an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string path = "layers[" + std::to_string(i) + "]";
    const json& node = layers[i];
    if (!node.is_object() || !node.contains("kind") || !node["kind"].is_string()) {
      throw SchemaError(path + ": expected an object with a string 'kind'");
    }
    const auto kind = parse_layer_kind(node["kind"].get<std::string>());
    if (!kind) throw SchemaError(path + ".kind: unknown kind '" + node["kind"].get<std::string>() + "'");
    LayerSpec layer;
    layer.kind = *kind;
    const bool windowed = layer.kind == LayerKind::conv || layer.kind == LayerKind::maxpool ||
                          layer.kind == LayerKind::avgpool;
    if (windowed) {
      if (!node.contains("geometry")) throw SchemaError(path + ".geometry: missing");
      layer.geometry = parse_geometry(node["geometry"], path + ".geometry");
    }
    if (layer.kind == LayerKind::upsample) {
      if (!node.contains("geometry") || !node["geometry"].contains("factor")) {
        throw SchemaError(path + ".geometry.factor: missing");
      }
      layer.factor = as_size(node["geometry"]["factor"], path + ".geometry.factor");
    }
    if (layer.kind == LayerKind::batchnorm && node.contains("eps")) {
      if (!node["eps"].is_number()) throw SchemaError(path + ".eps: expected a number");
      layer.eps = node["eps"].get<float>();
    }
    if (node.contains("params")) {
      if (!node["params"].is_object()) throw SchemaError(path + ".params: expected an object");
      for (const auto& [role, blob] : node["params"].items()) {
        if (!blob.is_string()) throw SchemaError(path + ".params." + role + ": expected a blob name");
        layer.params[role] = blob.get<std::string>();
      }
    }
    if (node.contains("concat_source")) {
      layer.concat_source = as_size(node["concat_source"], path + ".concat_source");
    }
    if (layer.kind == LayerKind::concat && !layer.concat_source) {
      throw SchemaError(path + ".concat_source: missing");
    }
    graph.layers.push_back(std::move(layer));
  }
  return graph;
}

std::string manifest_to_json(const ModelGraph& graph) {
  json root;
  root["version"] = kManifestVersion;
  root["input_shape"] = graph.input_shape;
  root["labels"] = graph.labels;
  if (!graph.preprocess.mean.empty() || !graph.preprocess.std.empty()) {
    root["preprocess"] = {{"mean", graph.preprocess.mean}, {"std", graph.preprocess.std}};
  }
  json layers = json::array();
  for (const LayerSpec& layer : graph.layers) {
    json node;
    node["kind"] = std::string(to_string(layer.kind));
    if (layer.kind == LayerKind::conv) node["geometry"] = geometry_to_json(layer.geometry, true);
    if (layer.kind == LayerKind::maxpool || layer.kind == LayerKind::avgpool) {
      node["geometry"] = geometry_to_json(layer.geometry, false);
    }
    if (layer.kind == LayerKind::upsample) node["geometry"] = {{"factor", layer.factor}};
    if (layer.kind == LayerKind::batchnorm) node["eps"] = layer.eps;
    if (!layer.params.empty()) node["params"] = layer.params;
    if (layer.concat_source) node["concat_source"] = *layer.concat_source;
    layers.push_back(std::move(node));
  }
  root["layers"] = std::move(layers);
  return root.dump(2) + "\n";
}

WeightStore parse_blob(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("blob file does not start with magic ADW1");
  }
  WeightStore store;
  std::size_t offset = 4;
  while (offset < bytes.size()) {
    const std::uint32_t name_len = read_u32(bytes, offset, "name length");
    if (offset + name_len > bytes.size()) throw IoError("blob truncated in record name");
    std::string name = bytes.substr(offset, name_len);
    offset += name_len;
    const std::uint32_t rank = read_u32(bytes, offset, "rank");
    if (rank == 0) throw IoError("blob record '" + name + "' has rank 0");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(read_u32(bytes, offset, "dims"));
    const std::size_t count = shape_product(shape);
    if (offset + count * sizeof(float) > bytes.size()) {
      throw IoError("blob record '" + name + "' declares shape " + shape_to_string(shape) +
                    " but the payload is truncated");
    }
    Tensor::Vector data(static_cast<Eigen::Index>(count));
    std::memcpy(data.data(), bytes.data() + offset, count * sizeof(float));
    offset += count * sizeof(float);
    Tensor tensor(shape, std::move(data));
    if (!tensor.values().allFinite()) {
      throw NonFiniteError("blob record '" + name + "' contains non-finite values");
    }
    store.add(name, std::move(tensor));
  }
  return store;
}

std::string serialize_blob(const WeightStore& weights) {
  std::string out(kMagic, 4);
  for (const auto& [name, tensor] : weights.blobs()) {
    append_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    append_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) append_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(tensor.values().data()), tensor.size() * sizeof(float));
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

WeightStore read_blob(const std::filesystem::path& path) { return parse_blob(read_text_file(path)); }

void write_blob(const std::filesystem::path& path, const WeightStore& weights) {
  write_text_file(path, serialize_blob(weights));
}

Model load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& blob_path) {
  Model model{parse_manifest(read_text_file(manifest_path)), read_blob(blob_path)};
  finalize(model.graph, model.weights);
  return model;
}

Model load_model(const std::string& prefix) { return load_model(prefix + ".json", prefix + ".bin"); }

void save_model(const Model& model, const std::string& prefix) {
  write_text_file(prefix + ".json", manifest_to_json(model.graph));
  write_blob(prefix + ".bin", model.weights);
}

}  // namespace convad
