#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "dialnav/nn/matrix.hpp"

namespace dialnav::nn {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Ordered collection of named parameters. Element addresses are stable for
// the lifetime of the store, so graphs may hold pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other) { *this = other; }
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Parameter& add(std::string name, int rows, int cols);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // FNV-1a over names and raw value bytes; equal checksums mean byte-identical values.
  std::uint64_t checksum() const;

  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

void init_normal(Parameter& p, std::mt19937_64& rng, double stddev);
void init_uniform(Parameter& p, std::mt19937_64& rng, double limit);
// Glorot-uniform limit for a rows x cols weight.
void init_xavier(Parameter& p, std::mt19937_64& rng);

}  // namespace dialnav::nn
