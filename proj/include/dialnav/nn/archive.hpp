#pragma once

// Binary checkpoint container: a versioned header, a kind tag, a JSON config
// blob and a list of named double arrays. Values are stored as raw IEEE-754
// little-endian bytes so a load reproduces every parameter bit for bit.
//
//   magic "DNCK" | u32 version | str kind | str config_json | u32 count
//   count x ( str name | i32 rows | i32 cols | rows*cols f64 )
//
// where str is a u32 byte length followed by the bytes.

#include <filesystem>
#include <string>
#include <vector>

#include "dialnav/nn/parameters.hpp"

namespace dialnav::nn {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  std::string kind;
  std::string config_json;
  std::vector<std::pair<std::string, Matrix>> arrays;

  // Appends every parameter of the store under "<prefix>/<name>".
  void add_store(const std::string& prefix, const ParameterStore& store);
  // Copies arrays under "<prefix>/" into a store whose layout already matches.
  void load_store(const std::string& prefix, ParameterStore& store) const;
  bool has_prefix(const std::string& prefix) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace dialnav::nn
