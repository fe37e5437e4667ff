#pragma once

// Pre-training objectives and the two-stage curriculum runner.
//
// Stage 1 pairs templated captions with single views: masked token loss over
// caption words and tags plus a match/mismatch classifier on [CLS]. Stage 2
// runs on navigation tuples (history, tags, panorama, next direction): masked
// dialog words, masked object tags over detector classes, and the view bin of
// the next node.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dialnav/dialog.hpp"
#include "dialnav/encoder.hpp"

namespace dialnav {

inline constexpr int kDetectorClasses = 64;

// (sequence position, label)
using PositionLabels = std::vector<std::pair<int, int>>;

struct MaskResult {
  std::vector<int> ids;
  PositionLabels labels;  // position -> original id
};
// Masks each non-special id with probability `prob`.
MaskResult mask_tokens(std::span<const int> ids, std::mt19937_64& rng, double prob = 0.15);

struct PolluteResult {
  std::vector<int> tags;
  int y = 1;  // 1 = tags left untouched
};
// With probability `prob` the whole tag set is replaced by draws from `pool`.
PolluteResult pollute_tags(std::span<const int> tags, std::mt19937_64& rng, std::span<const int> pool,
                           double prob = 0.5);

struct PretrainSample {
  EncoderInput input;
  PositionLabels mlm_labels;   // masked word/tag positions -> token id
  PositionLabels motp_labels;  // masked tag positions -> detector class
  int direction_label = -1;    // view bin of the next node, stage 2
  int contrastive_label = -1;  // y, stage 1
};
using PretrainBatch = std::vector<PretrainSample>;

class PretrainHeads {
 public:
  // Throws ConfigError when detector_classes == vocab_size.
  PretrainHeads(int hidden, int vocab_size, int detector_classes, std::uint64_t seed);

  int vocab_size() const noexcept { return vocab_size_; }
  int detector_classes() const noexcept { return classes_; }
  nn::ParameterStore& params() noexcept { return params_; }
  const nn::ParameterStore& params() const noexcept { return params_; }

  nn::Var mlm_logits(nn::Graph& g, nn::Var rows);          // n x V
  nn::Var motp_logits(nn::Graph& g, nn::Var rows);         // n x C
  nn::Var contrastive_logit(nn::Graph& g, nn::Var cls);    // n x 1
  nn::Var direction_logits(nn::Graph& g, nn::Var cls);     // n x 36

 private:
  int vocab_size_;
  int classes_;
  nn::ParameterStore params_;
};

using EncodedBatch = std::vector<Encoder::Output>;
EncodedBatch encode_batch(nn::Graph& g, Encoder& enc, const PretrainBatch& batch);

// Each returns a 1x1 mean; a constant 0 when no sample carries a label.
nn::Var masked_token_loss(nn::Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out);
nn::Var contrastive_loss(nn::Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out);
nn::Var motp_loss(nn::Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out);
// Throws std::invalid_argument when a label is absent or outside [0, 36).
nn::Var directional_loss(nn::Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out);

// Convenience wrappers that run the encoder first.
nn::Var loss_stage1(nn::Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch);
nn::Var loss_mlm(nn::Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch);
nn::Var loss_motp(nn::Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch);
nn::Var loss_directional(nn::Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch);

// Stage-1 record: one view, its caption, tags and regions.
struct CaptionRecord {
  Tokens caption;
  std::vector<int> tags;  // detector classes, in caption order
  std::vector<RegionInput> regions;
  int class_count = 0;    // object vocabulary size of the source world
};
Tokens caption_template(const std::vector<std::string>& objects);
std::vector<CaptionRecord> make_caption_records(const WorldSet& worlds, int count, std::uint64_t seed);

// Stage-2 record: a step of a supervision path.
struct NavigationRecord {
  std::string world_id;
  DialogHistory history;
  NodeId node = 0;
  int direction_label = 0;
};
std::vector<NavigationRecord> make_navigation_records(const WorldSet& worlds, const std::vector<NdhInstance>& instances);

PretrainSample make_stage1_sample(const CaptionRecord& rec, std::span<const CaptionRecord> pool,
                                  const Vocabulary& vocab, bool use_tags, std::mt19937_64& rng, double mask_prob,
                                  double pollute_prob);
PretrainSample make_stage2_sample(const NavigationRecord& rec, const WorldSet& worlds, const Vocabulary& vocab,
                                  int max_len, bool use_tags, std::mt19937_64& rng, double mask_prob,
                                  bool mask_words = true, bool mask_tags = true);

struct CurriculumFlags {
  bool stage1_contrastive_mlm = false;
  bool stage1_object_tags = false;
  bool stage2_mlm = false;
  bool stage2_motp = false;
  bool stage2_directional = false;

  bool stage1() const noexcept { return stage1_contrastive_mlm; }
  bool stage2() const noexcept { return stage2_mlm || stage2_motp || stage2_directional; }
  // Object tags enter every input, fine-tuning included, only with this flag.
  bool use_object_tags() const noexcept { return stage1_object_tags; }
  void validate() const;
  // Cumulative ablation rows 1..6: none, +stage 1, +tags, +MLM, +MOTP, +directional.
  static CurriculumFlags row(int r);
  friend bool operator==(const CurriculumFlags&, const CurriculumFlags&) = default;
};
nlohmann::json to_json(const CurriculumFlags& f);
CurriculumFlags curriculum_flags_from_json(const nlohmann::json& j);

struct PretrainConfig {
  int stage1_steps = 150;
  int stage2_steps = 300;
  int batch_size = 8;
  double lr = 1e-3;
  double clip_norm = 1.0;
  double mask_prob = 0.15;
  double pollute_prob = 0.5;
  int detector_classes = kDetectorClasses;
  void validate() const;
};
nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

struct PretrainData {
  const WorldSet* worlds = nullptr;
  std::vector<CaptionRecord> captions;
  std::vector<NavigationRecord> navigation;
};

struct LossPoint {
  int step = 0;  // global step across both stages
  int stage = 1;
  std::map<std::string, double> losses;
};

struct PretrainResult {
  Encoder encoder;
  std::vector<LossPoint> curve;
};

// Seed of the encoder's random initialization for a run seed.
std::uint64_t encoder_init_seed(std::uint64_t seed);

// Throws ConfigError before any training when a flagged stage lacks data.
PretrainResult run_pretraining(const EncoderConfig& enc_cfg, const Vocabulary& vocab, const PretrainData& data,
                               const CurriculumFlags& flags, const PretrainConfig& cfg, std::uint64_t seed);

// Curve names present in a report.
std::vector<std::string> curve_names(const std::vector<LossPoint>& curve);
void write_pretrain_report(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace dialnav
