#pragma once

// Cross-modal transformer over the Word-Tag-Image sequence
//
//   [CLS][TAR] hint ([NAV] question [GUIDE] answer)* [SEP]  tags [SEP]  regions  [PAD]*
//
// Words and tags share the word embedding table and carry position
// embeddings; region tokens carry no position signal, only their projected
// feature and geometry plus the fixed direction embedding of their view.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dialnav/dialog.hpp"
#include "dialnav/nn/graph.hpp"
#include "dialnav/vocab.hpp"
#include "dialnav/world.hpp"

namespace dialnav {

inline constexpr int kDirectionDim = 128;
inline constexpr int kSegWord = 0;
inline constexpr int kSegTag = 1;
inline constexpr int kSegRegion = 2;

// [sin phi, cos phi, sin omega, cos omega] tiled 32 times.
std::array<double, kDirectionDim> build_direction_embedding(double heading, double elevation);

struct EncoderConfig {
  int hidden = 128;
  int layers = 4;
  int heads = 4;
  int ff = 256;
  int max_len = 256;
  int feature_dim = 64;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};
nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct RegionInput {
  std::vector<double> feature;
  std::array<double, kGeometryDim> geometry{};
  double heading = 0.0;
  double elevation = 0.0;
  int tag_class = 0;
};

struct EncoderInput {
  std::vector<int> word_ids;
  std::vector<int> tag_ids;
  std::vector<int> tag_classes;  // detector class per tag position, -1 for [SEP]
  std::vector<RegionInput> regions;
  int pad = 0;                   // trailing [PAD] positions
  std::vector<int> masked_regions;  // region indices hidden from attention

  int length() const noexcept {
    return static_cast<int>(word_ids.size() + tag_ids.size() + regions.size()) + pad;
  }
  int tag_offset() const noexcept { return static_cast<int>(word_ids.size()); }
  int region_offset() const noexcept { return static_cast<int>(word_ids.size() + tag_ids.size()); }
};

// Unique tag classes of a panorama, ascending.
std::vector<int> panorama_tags(const PanoramicObservation& obs);

// Assembles the sequence; when it would exceed max_len the oldest exchanges
// are dropped first (the hint is always kept).
EncoderInput assemble_input(const DialogHistory& history, const std::vector<int>& tag_classes,
                            const PanoramicObservation& obs, const World& world, const Vocabulary& vocab,
                            int max_len);
// Input for an agent at `node`; with use_tags off the tag segment is a lone [SEP].
EncoderInput encoder_input_at(const World& world, const DialogHistory& history, NodeId node,
                              const Vocabulary& vocab, int max_len, bool use_tags);
// Word segment only, for inspection and tests.
std::vector<int> word_segment(const DialogHistory& history, const Vocabulary& vocab);

class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, int vocab_size, std::uint64_t seed);

  struct Output {
    nn::Var hidden;   // length x H
    nn::Var cls;      // 1 x H
    nn::Var regions;  // the region input matrix (a leaf when gradients are on)
    int length = 0;
  };

  // Throws ConfigError before any computation when the input is too long.
  Output forward(nn::Graph& g, const EncoderInput& in);
  // Inference-only convenience: the hidden-state matrix.
  nn::Matrix encode(const EncoderInput& in);

  const EncoderConfig& config() const noexcept { return cfg_; }
  int vocab_size() const noexcept { return vocab_size_; }
  nn::ParameterStore& params() noexcept { return params_; }
  const nn::ParameterStore& params() const noexcept { return params_; }

 private:
  EncoderConfig cfg_;
  int vocab_size_;
  nn::ParameterStore params_;
};

// Checkpoint with kind "encoder": config, vocabulary and parameters.
void save_encoder(const std::filesystem::path& path, const Encoder& enc, const Vocabulary& vocab,
                  const nlohmann::json& extra = nlohmann::json::object());
struct LoadedEncoder {
  Encoder encoder;
  Vocabulary vocab;
  nlohmann::json meta;
};
LoadedEncoder load_encoder(const std::filesystem::path& path);

}  // namespace dialnav
