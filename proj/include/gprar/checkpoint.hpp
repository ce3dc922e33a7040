#pragma once

#include "gprar/pipeline.hpp"

#include <filesystem>
#include <string>

namespace gprar {

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text(const std::filesystem::path& path);

/// Model directory layout: prar_config.json + prar.params.json, and for a full
/// predictor also fa_config.json (with the feature set) + fa.params.json.
void save_prar(const std::filesystem::path& dir, const PrarModel& model, const std::string& stem = "prar");
PrarModel load_prar(const std::filesystem::path& dir, const std::string& stem = "prar");

void save_fa(const std::filesystem::path& dir, const FaModel& model, const FeatureSet& features,
             const std::string& stem = "fa");
std::pair<FaModel, FeatureSet> load_fa(const std::filesystem::path& dir, const std::string& stem = "fa");

}  // namespace gprar
