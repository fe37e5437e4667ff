#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dialnav {

// Token <-> id mapping. Ids below kNumSpecial are reserved for the special
// tokens, in the order of the constants below.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kTar = 5;
  static constexpr int kNav = 6;
  static constexpr int kGuide = 7;
  static constexpr int kNumSpecial = 8;

  // Special tokens followed by the given words (deduplicated, sorted).
  explicit Vocabulary(std::vector<std::string> words = {});

  // Every word the data generators and captioner can emit.
  static Vocabulary standard();

  int size() const noexcept { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  static bool is_special(int id) noexcept { return id >= 0 && id < kNumSpecial; }
  std::vector<int> ids(std::span<const std::string> tokens) const;
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // One token per line after a header naming the reserved-id count.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

const std::vector<std::string>& special_token_names();

}  // namespace dialnav
