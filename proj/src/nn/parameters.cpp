#include "dialnav/nn/parameters.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dialnav::nn {

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    params_ = other.params_;
    index_ = other.index_;
  }
  return *this;
}

Parameter& ParameterStore::add(std::string name, int rows, int cols) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), Matrix(rows, cols), Matrix(rows, cols)});
  return params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterStore::at(std::string_view name) {
  if (Parameter* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterStore::at(std::string_view name) const {
  if (const Parameter* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    mix(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    const auto& x = a.params_[i];
    const auto& y = b.params_[i];
    if (x.name != y.name || !x.value.same_shape(y.value)) return false;
    if (std::memcmp(x.value.data(), y.value.data(), x.value.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void init_normal(Parameter& p, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : p.value.values()) v = dist(rng);
}

void init_uniform(Parameter& p, std::mt19937_64& rng, double limit) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : p.value.values()) v = dist(rng);
}

void init_xavier(Parameter& p, std::mt19937_64& rng) {
  init_uniform(p, rng, std::sqrt(6.0 / (p.value.rows() + p.value.cols())));
}

}  // namespace dialnav::nn
