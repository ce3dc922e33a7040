#include "gprar/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gprar {

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_prar(const std::filesystem::path& dir, const PrarModel& model, const std::string& stem) {
  write_atomic(dir / (stem + "_config.json"), model.config().to_json().dump(2) + "\n");
  write_atomic(dir / (stem + ".params.json"), model.params().to_json().dump() + "\n");
}

PrarModel load_prar(const std::filesystem::path& dir, const std::string& stem) {
  const auto config = PrarConfig::from_json(nlohmann::json::parse(read_text(dir / (stem + "_config.json"))));
  return PrarModel(config, ModelParams::load(dir / (stem + ".params.json")));
}

void save_fa(const std::filesystem::path& dir, const FaModel& model, const FeatureSet& features,
             const std::string& stem) {
  nlohmann::json j = model.config().to_json();
  j["features"] = features.to_string();
  write_atomic(dir / (stem + "_config.json"), j.dump(2) + "\n");
  write_atomic(dir / (stem + ".params.json"), model.params().to_json().dump() + "\n");
}

std::pair<FaModel, FeatureSet> load_fa(const std::filesystem::path& dir, const std::string& stem) {
  const auto j = nlohmann::json::parse(read_text(dir / (stem + "_config.json")));
  const FeatureSet features = FeatureSet::parse(j.at("features").get<std::string>());
  FaConfig config = FaConfig::from_json(j);
  if (config.streams != features.streams())
    throw std::runtime_error("fa config: stream flags disagree with feature set " + features.to_string());
  return {FaModel(config, ModelParams::load(dir / (stem + ".params.json"))), features};
}

}  // namespace gprar
