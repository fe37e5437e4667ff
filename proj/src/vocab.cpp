#include "dialnav/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "dialnav/errors.hpp"
#include "dialnav/world.hpp"

namespace dialnav {
namespace {

constexpr const char* kHeader = "#dialnav-vocab v1 reserved=";

// Words used by hint, question, answer, instruction and caption templates.
const std::vector<std::string> kTemplateWords = {
    "find", "the", "in",   "where", "is",   "i",     "see",  "a",    ".",   "?",  "go",   "ahead", "behind",
    "left", "right", "toward", "then", "and", "stop", "you", "found", "it", ",", "here", "view", "with", "there"};

}  // namespace

const std::vector<std::string>& special_token_names() {
  static const std::vector<std::string> names = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                 "[MASK]", "[TAR]", "[NAV]", "[GUIDE]"};
  return names;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  tokens_ = special_token_names();
  std::set<std::string> uniq(words.begin(), words.end());
  for (const auto& s : special_token_names()) uniq.erase(s);
  tokens_.insert(tokens_.end(), uniq.begin(), uniq.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::standard() {
  std::vector<std::string> words = kTemplateWords;
  words.insert(words.end(), object_catalog().begin(), object_catalog().end());
  words.insert(words.end(), region_catalog().begin(), region_catalog().end());
  return Vocabulary(std::move(words));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::vector<int> Vocabulary::ids(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << kHeader << kNumSpecial << '\n';
  for (const auto& t : tokens_) os << t << '\n';
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_token_names();
  if (tokens.size() < specials.size() || !std::equal(specials.begin(), specials.end(), tokens.begin()))
    throw DataError("vocabulary does not start with the reserved special tokens");
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second)
      throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing vocabulary: expected " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != std::string(kHeader) + std::to_string(kNumSpecial))
    throw ParseError(path.string(), 1, "bad vocabulary header");
  std::vector<std::string> tokens;
  while (std::getline(is, line)) {
    if (line.empty()) throw ParseError(path.string(), tokens.size() + 2, "empty token");
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

}  // namespace dialnav
