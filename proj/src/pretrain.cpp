#include "dialnav/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "dialnav/errors.hpp"
#include "dialnav/nn/optim.hpp"
#include "dialnav/rng.hpp"

namespace dialnav {
namespace {

using nn::Graph;
using nn::Matrix;
using nn::Var;

constexpr double kHeadInitStd = 0.02;
constexpr std::uint64_t kStreamInit = 0x656e63;   // "enc"
constexpr std::uint64_t kStreamHeads = 0x686473;  // "hds"
constexpr std::uint64_t kStreamTrain = 0x74726e;  // "trn"

Var zero_loss(Graph& g) { return g.input(Matrix(1, 1)); }

// Hidden rows of every labelled position, stacked across the batch.
Var gather_labelled(Graph& g, const EncodedBatch& out, const PretrainBatch& batch,
                    PositionLabels PretrainSample::*field, std::vector<int>& targets) {
  std::vector<Var> rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& labels = batch[i].*field;
    if (labels.empty()) continue;
    std::vector<int> pos;
    for (const auto& [p, t] : labels) {
      if (p < 0 || p >= out[i].length) throw std::invalid_argument("label position outside the sequence");
      pos.push_back(p);
      targets.push_back(t);
    }
    rows.push_back(g.gather_rows(out[i].hidden, pos));
  }
  if (rows.empty()) return {};
  return rows.size() == 1 ? rows[0] : g.concat_rows(rows);
}

Var stack_cls(Graph& g, const EncodedBatch& out) {
  std::vector<Var> rows;
  for (const auto& o : out) rows.push_back(o.cls);
  return rows.size() == 1 ? rows[0] : g.concat_rows(rows);
}

std::vector<int> tag_token_ids(std::span<const int> classes, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (int c : classes) ids.push_back(vocab.id(object_catalog().at(static_cast<std::size_t>(c))));
  return ids;
}

}  // namespace

MaskResult mask_tokens(std::span<const int> ids, std::mt19937_64& rng, double prob) {
  MaskResult r{{ids.begin(), ids.end()}, {}};
  if (prob <= 0.0) return r;
  std::bernoulli_distribution coin(std::min(prob, 1.0));
  for (std::size_t i = 0; i < r.ids.size(); ++i) {
    if (Vocabulary::is_special(r.ids[i])) continue;
    if (!coin(rng)) continue;
    r.labels.emplace_back(static_cast<int>(i), r.ids[i]);
    r.ids[i] = Vocabulary::kMask;
  }
  return r;
}

PolluteResult pollute_tags(std::span<const int> tags, std::mt19937_64& rng, std::span<const int> pool, double prob) {
  if (pool.empty()) throw std::invalid_argument("pollute_tags needs a nonempty pool");
  PolluteResult r{{tags.begin(), tags.end()}, 1};
  std::bernoulli_distribution coin(std::clamp(prob, 0.0, 1.0));
  if (!coin(rng)) return r;
  r.y = 0;
  std::vector<int> draw(pool.begin(), pool.end());
  const std::size_t n = std::max<std::size_t>(tags.size(), 1);
  if (draw.size() >= n) {
    std::shuffle(draw.begin(), draw.end(), rng);
    r.tags.assign(draw.begin(), draw.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, draw.size() - 1);
    r.tags.clear();
    for (std::size_t i = 0; i < n; ++i) r.tags.push_back(draw[pick(rng)]);
  }
  return r;
}

PretrainHeads::PretrainHeads(int hidden, int vocab_size, int detector_classes, std::uint64_t seed)
    : vocab_size_(vocab_size), classes_(detector_classes) {
  if (hidden < 1 || vocab_size < 1 || detector_classes < 1) throw ConfigError("pre-training head sizes must be positive");
  if (detector_classes == vocab_size)
    throw ConfigError("detector class count must differ from the vocabulary size");
  std::mt19937_64 rng(seed);
  auto weight = [&](const char* name, int r, int c) { nn::init_normal(params_.add(name, r, c), rng, kHeadInitStd); };
  auto zeros = [&](const char* name, int c) { params_.add(name, 1, c); };
  weight("mlm/w", hidden, hidden);
  zeros("mlm/b", hidden);
  params_.add("mlm/ln_g", 1, hidden).value.fill(1.0);
  zeros("mlm/ln_b", hidden);
  weight("mlm/out_w", hidden, vocab_size);
  zeros("mlm/out_b", vocab_size);
  weight("motp/w", hidden, hidden);
  zeros("motp/b", hidden);
  weight("motp/out_w", hidden, detector_classes);
  zeros("motp/out_b", detector_classes);
  weight("match/w", hidden, 1);
  zeros("match/b", 1);
  weight("dir/w", hidden, hidden);
  zeros("dir/b", hidden);
  weight("dir/out_w", hidden, kNumViews);
  zeros("dir/out_b", kNumViews);
}

Var PretrainHeads::mlm_logits(Graph& g, Var rows) {
  auto P = [&](const char* n) { return g.param(params_.at(n)); };
  Var h = g.gelu(g.add_row(g.matmul(rows, P("mlm/w")), P("mlm/b")));
  h = g.layer_norm(h, P("mlm/ln_g"), P("mlm/ln_b"));
  return g.add_row(g.matmul(h, P("mlm/out_w")), P("mlm/out_b"));
}

Var PretrainHeads::motp_logits(Graph& g, Var rows) {
  auto P = [&](const char* n) { return g.param(params_.at(n)); };
  Var h = g.gelu(g.add_row(g.matmul(rows, P("motp/w")), P("motp/b")));
  return g.add_row(g.matmul(h, P("motp/out_w")), P("motp/out_b"));
}

Var PretrainHeads::contrastive_logit(Graph& g, Var cls) {
  return g.add_row(g.matmul(cls, g.param(params_.at("match/w"))), g.param(params_.at("match/b")));
}

Var PretrainHeads::direction_logits(Graph& g, Var cls) {
  auto P = [&](const char* n) { return g.param(params_.at(n)); };
  Var h = g.gelu(g.add_row(g.matmul(cls, P("dir/w")), P("dir/b")));
  return g.add_row(g.matmul(h, P("dir/out_w")), P("dir/out_b"));
}

EncodedBatch encode_batch(Graph& g, Encoder& enc, const PretrainBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty pre-training batch");
  EncodedBatch out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(enc.forward(g, s.input));
  return out;
}

Var masked_token_loss(Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out) {
  std::vector<int> targets;
  Var rows = gather_labelled(g, out, batch, &PretrainSample::mlm_labels, targets);
  if (!rows.valid()) return zero_loss(g);
  return g.cross_entropy(heads.mlm_logits(g, rows), targets);
}

Var contrastive_loss(Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out) {
  std::vector<Var> cls;
  std::vector<double> y, w;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int label = batch[i].contrastive_label;
    if (label < 0) continue;
    if (label > 1) throw std::invalid_argument("contrastive label must be 0 or 1");
    cls.push_back(out[i].cls);
    y.push_back(label);
    w.push_back(1.0);
  }
  if (cls.empty()) return zero_loss(g);
  Var rows = cls.size() == 1 ? cls[0] : g.concat_rows(cls);
  return g.bce_with_logits(heads.contrastive_logit(g, rows), y, w);
}

Var motp_loss(Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out) {
  std::vector<int> targets;
  Var rows = gather_labelled(g, out, batch, &PretrainSample::motp_labels, targets);
  if (!rows.valid()) return zero_loss(g);
  for (int t : targets)
    if (t < 0 || t >= heads.detector_classes()) throw std::invalid_argument("detector class out of range");
  return g.cross_entropy(heads.motp_logits(g, rows), targets);
}

Var directional_loss(Graph& g, PretrainHeads& heads, const PretrainBatch& batch, const EncodedBatch& out) {
  std::vector<int> targets;
  for (const auto& s : batch) {
    if (s.direction_label < 0) throw std::invalid_argument("navigation sample has no direction label");
    if (s.direction_label >= kNumViews) throw std::invalid_argument("direction label outside [0, 36)");
    targets.push_back(s.direction_label);
  }
  return g.cross_entropy(heads.direction_logits(g, stack_cls(g, out)), targets);
}

Var loss_stage1(Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch) {
  const auto out = encode_batch(g, enc, batch);
  const Var parts[] = {masked_token_loss(g, heads, batch, out), contrastive_loss(g, heads, batch, out)};
  return g.add_scalars(parts);
}

Var loss_mlm(Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch) {
  return masked_token_loss(g, heads, batch, encode_batch(g, enc, batch));
}

Var loss_motp(Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch) {
  return motp_loss(g, heads, batch, encode_batch(g, enc, batch));
}

Var loss_directional(Graph& g, Encoder& enc, PretrainHeads& heads, const PretrainBatch& batch) {
  return directional_loss(g, heads, batch, encode_batch(g, enc, batch));
}

Tokens caption_template(const std::vector<std::string>& objects) {
  if (objects.empty()) throw std::invalid_argument("caption needs at least one object");
  Tokens t{"there", "is"};
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (i > 0) t.push_back(i + 1 == objects.size() ? "and" : ",");
    t.push_back("a");
    t.push_back(objects[i]);
  }
  return t;
}

std::vector<CaptionRecord> make_caption_records(const WorldSet& worlds, int count, std::uint64_t seed) {
  if (worlds.empty()) throw DataError("caption data needs at least one world");
  std::vector<const World*> pool;
  for (const auto& [id, w] : worlds) pool.push_back(&w);
  std::mt19937_64 rng(seed);
  std::vector<CaptionRecord> out;
  while (static_cast<int>(out.size()) < count) {
    const World& w = *pool[rng() % pool.size()];
    const NodeId node = static_cast<NodeId>(rng() % w.positions.size());
    const int view = static_cast<int>(rng() % kNumViews);
    const auto obs = observe(w, AgentState{node, 0.0, 0.0});
    const auto& v = obs.views[static_cast<std::size_t>(view)];
    if (v.regions.empty()) continue;
    CaptionRecord rec;
    std::vector<std::string> names;
    for (const auto& r : v.regions) {
      rec.tags.push_back(r.tag);
      names.push_back(w.object_vocab[static_cast<std::size_t>(r.tag)]);
      rec.regions.push_back({r.feature, r.geometry, v.heading, v.elevation, r.tag});
    }
    rec.caption = caption_template(names);
    rec.class_count = static_cast<int>(w.object_vocab.size());
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<NavigationRecord> make_navigation_records(const WorldSet& worlds, const std::vector<NdhInstance>& instances) {
  std::vector<NavigationRecord> out;
  for (const auto& inst : instances) {
    const World& w = world_for(worlds, inst.world_id);
    validate_path(w, inst.id, inst.path);
    for (std::size_t i = 0; i + 1 < inst.path.size(); ++i) {
      const NodeId here = inst.path[i], next = inst.path[i + 1];
      out.push_back({inst.world_id, inst.history, here, view_index_for(bearing(w, here, next), edge_elevation(w, here, next))});
    }
  }
  return out;
}

PretrainSample make_stage1_sample(const CaptionRecord& rec, std::span<const CaptionRecord> pool,
                                  const Vocabulary& vocab, bool use_tags, std::mt19937_64& rng, double mask_prob,
                                  double pollute_prob) {
  PretrainSample s;
  std::vector<int> tags = rec.tags;
  const std::vector<RegionInput>* regions = &rec.regions;
  int y = 1;
  if (use_tags) {
    std::vector<int> others;
    for (int c = 0; c < rec.class_count; ++c)
      if (std::find(rec.tags.begin(), rec.tags.end(), c) == rec.tags.end()) others.push_back(c);
    auto p = pollute_tags(rec.tags, rng, others, pollute_prob);
    tags = std::move(p.tags);
    y = p.y;
  } else if (std::bernoulli_distribution(pollute_prob)(rng) && !pool.empty()) {
    // No tags to corrupt: pair the caption with another view's regions.
    for (int tries = 0; tries < 8; ++tries) {
      const auto& other = pool[rng() % pool.size()];
      if (std::set<int>(other.tags.begin(), other.tags.end()) == std::set<int>(rec.tags.begin(), rec.tags.end()))
        continue;
      regions = &other.regions;
      y = 0;
      break;
    }
  }

  std::vector<int> text{Vocabulary::kCls};
  for (int id : vocab.ids(rec.caption)) text.push_back(id);
  text.push_back(Vocabulary::kSep);
  const int nw = static_cast<int>(text.size());
  if (use_tags)
    for (int id : tag_token_ids(tags, vocab)) text.push_back(id);
  text.push_back(Vocabulary::kSep);
  auto masked = mask_tokens(text, rng, mask_prob);

  s.input.word_ids.assign(masked.ids.begin(), masked.ids.begin() + nw);
  s.input.tag_ids.assign(masked.ids.begin() + nw, masked.ids.end());
  if (use_tags) s.input.tag_classes = tags;
  s.input.tag_classes.push_back(-1);
  s.input.regions = *regions;
  s.mlm_labels = std::move(masked.labels);
  s.contrastive_label = y;
  return s;
}

PretrainSample make_stage2_sample(const NavigationRecord& rec, const WorldSet& worlds, const Vocabulary& vocab,
                                  int max_len, bool use_tags, std::mt19937_64& rng, double mask_prob, bool mask_words,
                                  bool mask_tags) {
  PretrainSample s;
  s.input = encoder_input_at(world_for(worlds, rec.world_id), rec.history, rec.node, vocab, max_len, use_tags);
  if (mask_words) {
    auto words = mask_tokens(s.input.word_ids, rng, mask_prob);
    s.input.word_ids = std::move(words.ids);
    s.mlm_labels = std::move(words.labels);
  }
  if (use_tags && mask_tags && mask_prob > 0.0) {
    std::bernoulli_distribution coin(std::min(mask_prob, 1.0));
    const int off = s.input.tag_offset();
    for (std::size_t j = 0; j < s.input.tag_ids.size(); ++j) {
      const int c = s.input.tag_classes[j];
      if (c < 0 || !coin(rng)) continue;
      s.input.tag_ids[j] = Vocabulary::kMask;
      s.motp_labels.emplace_back(off + static_cast<int>(j), c);
    }
  }
  s.direction_label = rec.direction_label;
  return s;
}

void CurriculumFlags::validate() const {
  if (stage1_object_tags && !stage1_contrastive_mlm)
    throw ConfigError("pretrain.stage1_object_tags requires pretrain.stage1_contrastive_mlm");
  if (stage2_motp && !stage1_object_tags) throw ConfigError("pretrain.stage2_motp requires pretrain.stage1_object_tags");
}

CurriculumFlags CurriculumFlags::row(int r) {
  if (r < 1 || r > 6) throw ConfigError("curriculum row must be in [1, 6]");
  CurriculumFlags f;
  f.stage1_contrastive_mlm = r >= 2;
  f.stage1_object_tags = r >= 3;
  f.stage2_mlm = r >= 4;
  f.stage2_motp = r >= 5;
  f.stage2_directional = r >= 6;
  return f;
}

nlohmann::json to_json(const CurriculumFlags& f) {
  return {{"stage1_contrastive_mlm", f.stage1_contrastive_mlm},
          {"stage1_object_tags", f.stage1_object_tags},
          {"stage2_mlm", f.stage2_mlm},
          {"stage2_motp", f.stage2_motp},
          {"stage2_directional", f.stage2_directional}};
}

CurriculumFlags curriculum_flags_from_json(const nlohmann::json& j) {
  CurriculumFlags f;
  f.stage1_contrastive_mlm = j.value("stage1_contrastive_mlm", false);
  f.stage1_object_tags = j.value("stage1_object_tags", false);
  f.stage2_mlm = j.value("stage2_mlm", false);
  f.stage2_motp = j.value("stage2_motp", false);
  f.stage2_directional = j.value("stage2_directional", false);
  return f;
}

void PretrainConfig::validate() const {
  if (stage1_steps < 0 || stage2_steps < 0) throw ConfigError("pretrain step counts must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("pretrain.lr must be > 0");
  if (mask_prob < 0.0 || mask_prob > 1.0) throw ConfigError("pretrain.mask_prob must be in [0, 1]");
  if (pollute_prob < 0.0 || pollute_prob > 1.0) throw ConfigError("pretrain.pollute_prob must be in [0, 1]");
  if (detector_classes < 1) throw ConfigError("pretrain.detector_classes must be >= 1");
}

nlohmann::json to_json(const PretrainConfig& c) {
  return {{"stage1_steps", c.stage1_steps}, {"stage2_steps", c.stage2_steps}, {"batch_size", c.batch_size},
          {"lr", c.lr},                     {"clip_norm", c.clip_norm},       {"mask_prob", c.mask_prob},
          {"pollute_prob", c.pollute_prob}, {"detector_classes", c.detector_classes}};
}

PretrainConfig pretrain_config_from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.stage1_steps = j.value("stage1_steps", c.stage1_steps);
  c.stage2_steps = j.value("stage2_steps", c.stage2_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.mask_prob = j.value("mask_prob", c.mask_prob);
  c.pollute_prob = j.value("pollute_prob", c.pollute_prob);
  c.detector_classes = j.value("detector_classes", c.detector_classes);
  return c;
}

std::uint64_t encoder_init_seed(std::uint64_t seed) { return hash_seed({seed, kStreamInit}); }

PretrainResult run_pretraining(const EncoderConfig& enc_cfg, const Vocabulary& vocab, const PretrainData& data,
                               const CurriculumFlags& flags, const PretrainConfig& cfg, std::uint64_t seed) {
  flags.validate();
  cfg.validate();
  enc_cfg.validate();
  if (flags.stage1() && cfg.stage1_steps > 0 && data.captions.empty())
    throw ConfigError("stage-1 pre-training is enabled but no caption data was provided");
  if (flags.stage2() && cfg.stage2_steps > 0 && (data.navigation.empty() || data.worlds == nullptr))
    throw ConfigError("stage-2 pre-training is enabled but no navigation data was provided");
  for (const auto& rec : data.navigation) world_for(*data.worlds, rec.world_id);

  PretrainResult result{Encoder(enc_cfg, vocab.size(), encoder_init_seed(seed)), {}};
  if (!flags.stage1() && !flags.stage2()) return result;

  Encoder& enc = result.encoder;
  PretrainHeads heads(enc_cfg.hidden, vocab.size(), cfg.detector_classes, hash_seed({seed, kStreamHeads}));
  nn::AdamConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.clip_norm = cfg.clip_norm;
  nn::Adam opt({&enc.params(), &heads.params()}, opt_cfg);
  std::mt19937_64 rng = stream_rng(seed, kStreamTrain);
  const bool tags = flags.use_object_tags();
  int step = 0;

  auto train_step = [&](int stage, const PretrainBatch& batch) {
    Graph g;
    const auto out = encode_batch(g, enc, batch);
    LossPoint pt{step++, stage, {}};
    std::vector<Var> terms;
    auto add = [&](const char* name, Var v) {
      pt.losses[name] = g.scalar(v);
      terms.push_back(v);
    };
    if (stage == 1) {
      add("stage1_mtl", masked_token_loss(g, heads, batch, out));
      add("stage1_cl", contrastive_loss(g, heads, batch, out));
    } else {
      if (flags.stage2_mlm) add("mlm", masked_token_loss(g, heads, batch, out));
      if (flags.stage2_motp) add("motp", motp_loss(g, heads, batch, out));
      if (flags.stage2_directional) add("directional", directional_loss(g, heads, batch, out));
    }
    g.backward(g.add_scalars(terms));
    opt.step();
    result.curve.push_back(std::move(pt));
  };

  if (flags.stage1())
    for (int s = 0; s < cfg.stage1_steps; ++s) {
      PretrainBatch batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& rec = data.captions[rng() % data.captions.size()];
        batch.push_back(make_stage1_sample(rec, data.captions, vocab, tags, rng, cfg.mask_prob, cfg.pollute_prob));
      }
      train_step(1, batch);
    }
  if (flags.stage2())
    for (int s = 0; s < cfg.stage2_steps; ++s) {
      PretrainBatch batch;
      for (int b = 0; b < cfg.batch_size; ++b) {
        const auto& rec = data.navigation[rng() % data.navigation.size()];
        batch.push_back(make_stage2_sample(rec, *data.worlds, vocab, enc_cfg.max_len, tags, rng, cfg.mask_prob,
                                           flags.stage2_mlm, flags.stage2_motp));
      }
      train_step(2, batch);
    }
  return result;
}

std::vector<std::string> curve_names(const std::vector<LossPoint>& curve) {
  std::set<std::string> names;
  for (const auto& p : curve)
    for (const auto& [k, v] : p.losses) names.insert(k);
  return {names.begin(), names.end()};
}

void write_pretrain_report(const std::filesystem::path& path, const std::vector<LossPoint>& curve) {
  std::vector<nlohmann::json> lines;
  for (const auto& p : curve) lines.push_back({{"step", p.step}, {"stage", p.stage}, {"losses", p.losses}});
  write_jsonl(path, lines);
}

}  // namespace dialnav
