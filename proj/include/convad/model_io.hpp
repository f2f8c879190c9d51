#pragma once

// Portable model format: a JSON manifest describing the layer list and a
// little-endian blob file holding named float32 tensors.
//
// Blob layout: magic "ADW1", then records of
//   u32 name_length | name (UTF-8) | u32 rank | u32 dims[rank] | f32 payload

#include <filesystem>
#include <string>

#include "convad/model.hpp"

namespace convad {

ModelGraph parse_manifest(const std::string& json_text);
std::string manifest_to_json(const ModelGraph& graph);

WeightStore read_blob(const std::filesystem::path& path);
WeightStore parse_blob(const std::string& bytes);
std::string serialize_blob(const WeightStore& weights);
void write_blob(const std::filesystem::path& path, const WeightStore& weights);

/// Reads and validates both files; the returned graph is finalized.
Model load_model(const std::filesystem::path& manifest_path,
                 const std::filesystem::path& blob_path);

/// `<prefix>.json` + `<prefix>.bin`.
Model load_model(const std::string& prefix);
void save_model(const Model& model, const std::string& prefix);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace convad
