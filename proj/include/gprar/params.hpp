#pragma once

#include "gprar/random.hpp"
#include "gprar/tensor.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace gprar {

inline constexpr const char* kCheckpointFormat = "gprar-params/1";

/// Named trainable tensors, each paired with a gradient of identical shape.
template <typename Scalar>
class BasicModelParams {
 public:
  struct Entry {
    BasicTensor<Scalar> value;
    BasicTensor<Scalar> grad;
  };

  explicit BasicModelParams(std::uint64_t rng_seed = 0) : rng_seed_(rng_seed) {}

  std::uint64_t rng_seed() const { return rng_seed_; }

  /// Glorot-uniform initialized entry: U[-s, s], s = sqrt(6 / (fan_in + fan_out)).
  /// The draw depends only on (rng_seed, name).
  BasicTensor<Scalar>& add_glorot(const std::string& name, Shape shape, Index fan_in, Index fan_out) {
    BasicTensor<Scalar> v(std::move(shape));
    fill_glorot(name, v, fan_in, fan_out);
    return insert(name, std::move(v));
  }

  BasicTensor<Scalar>& add_zeros(const std::string& name, Shape shape) {
    return insert(name, BasicTensor<Scalar>(std::move(shape)));
  }

  BasicTensor<Scalar>& add(const std::string& name, BasicTensor<Scalar> value) {
    return insert(name, std::move(value));
  }

  void reinitialize(const std::string& name, Index fan_in, Index fan_out) {
    auto& e = entry(name);
    fill_glorot(name, e.value, fan_in, fan_out);
    e.grad.values().setZero();
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("params: no entry '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("params: no entry '" + name + "'");
    return it->second;
  }

  BasicTensor<Scalar>& value(const std::string& name) { return entry(name).value; }
  const BasicTensor<Scalar>& value(const std::string& name) const { return entry(name).value; }
  BasicTensor<Scalar>& grad(const std::string& name) { return entry(name).grad; }
  const BasicTensor<Scalar>& grad(const std::string& name) const { return entry(name).grad; }

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::size_t count() const { return entries_.size(); }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.grad.values().setZero();
  }

  friend bool operator==(const BasicModelParams& a, const BasicModelParams& b) {
    if (a.rng_seed_ != b.rng_seed_ || a.entries_.size() != b.entries_.size()) return false;
    for (const auto& [name, e] : a.entries_) {
      auto it = b.entries_.find(name);
      if (it == b.entries_.end() || !(it->second.value == e.value)) return false;
    }
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["rng_seed"] = rng_seed_;
    auto& arr = j["entries"] = nlohmann::json::array();
    for (const auto& [name, e] : entries_) {
      nlohmann::json je;
      je["name"] = name;
      je["shape"] = e.value.shape();
      auto& vals = je["values"] = nlohmann::json::array();
      for (Index i = 0; i < e.value.size(); ++i) vals.push_back(static_cast<double>(e.value[i]));
      arr.push_back(std::move(je));
    }
    return j;
  }

  static BasicModelParams from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kCheckpointFormat)
      throw std::runtime_error("checkpoint: missing or unsupported format tag");
    BasicModelParams p(j.at("rng_seed").get<std::uint64_t>());
    for (const auto& je : j.at("entries")) {
      Shape shape = je.at("shape").get<Shape>();
      const auto& vals = je.at("values");
      Vector<Scalar> v(static_cast<Index>(vals.size()));
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double d = vals[i].get<double>();
        if (!std::isfinite(d)) throw std::runtime_error("checkpoint: non-finite value");
        v(static_cast<Index>(i)) = static_cast<Scalar>(d);
      }
      p.insert(je.at("name").get<std::string>(), BasicTensor<Scalar>(std::move(shape), std::move(v)));
    }
    return p;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    out << to_json().dump() << '\n';
  }

  static BasicModelParams load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("checkpoint: " + path.string() + " is corrupt: " + e.what());
    }
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("checkpoint: " + path.string() + " is malformed: " + e.what());
    }
  }

 private:
  BasicTensor<Scalar>& insert(const std::string& name, BasicTensor<Scalar> value) {
    if (contains(name)) throw std::invalid_argument("params: duplicate entry '" + name + "'");
    Entry e{std::move(value), {}};
    e.grad = BasicTensor<Scalar>(e.value.shape());
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  void fill_glorot(const std::string& name, BasicTensor<Scalar>& v, Index fan_in, Index fan_out) const {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(derive_seed(rng_seed_, fnv1a(name)));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.uniform(-s, s));
  }

  std::uint64_t rng_seed_;
  std::map<std::string, Entry> entries_;
};

using ModelParams = BasicModelParams<double>;

}  // namespace gprar
