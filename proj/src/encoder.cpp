#include "dialnav/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dialnav/errors.hpp"
#include "dialnav/nn/archive.hpp"

namespace dialnav {
namespace {

using nn::Graph;
using nn::Matrix;
using nn::Var;

constexpr double kMaskedScore = -1e30;
constexpr double kInitStd = 0.02;

std::string layer_name(int l, const char* what) { return "layer" + std::to_string(l) + "/" + what; }

}  // namespace

std::array<double, kDirectionDim> build_direction_embedding(double heading, double elevation) {
  const double block[4] = {std::sin(heading), std::cos(heading), std::sin(elevation), std::cos(elevation)};
  std::array<double, kDirectionDim> d{};
  for (int i = 0; i < kDirectionDim; ++i) d[i] = block[i % 4];
  return d;
}

void EncoderConfig::validate() const {
  if (hidden < 4) throw ConfigError("encoder.hidden must be >= 4");
  if (layers < 1) throw ConfigError("encoder.layers must be >= 1");
  if (heads < 1 || hidden % heads != 0) throw ConfigError("encoder.heads must divide encoder.hidden");
  if (ff < 1) throw ConfigError("encoder.ff must be >= 1");
  if (max_len < 4) throw ConfigError("encoder.max_len must be >= 4");
  if (feature_dim < 1) throw ConfigError("encoder.feature_dim must be >= 1");
}

nlohmann::json to_json(const EncoderConfig& c) {
  return {{"hidden", c.hidden}, {"layers", c.layers},   {"heads", c.heads},
          {"ff", c.ff},         {"max_len", c.max_len}, {"feature_dim", c.feature_dim}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ff = j.value("ff", c.ff);
  c.max_len = j.value("max_len", c.max_len);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  return c;
}

std::vector<int> panorama_tags(const PanoramicObservation& obs) {
  std::set<int> tags;
  for (const auto& v : obs.views)
    for (const auto& r : v.regions) tags.insert(r.tag);
  return {tags.begin(), tags.end()};
}

namespace {

std::vector<int> words_for(const Tokens& hint, std::span<const QaExchange> exchanges, const Vocabulary& vocab) {
  std::vector<int> ids{Vocabulary::kCls, Vocabulary::kTar};
  for (const auto& t : hint) ids.push_back(vocab.id(t));
  for (const auto& e : exchanges) {
    ids.push_back(Vocabulary::kNav);
    for (const auto& t : e.question) ids.push_back(vocab.id(t));
    ids.push_back(Vocabulary::kGuide);
    for (const auto& t : e.answer) ids.push_back(vocab.id(t));
  }
  ids.push_back(Vocabulary::kSep);
  return ids;
}

}  // namespace

std::vector<int> word_segment(const DialogHistory& history, const Vocabulary& vocab) {
  return words_for(history.target_hint, history.exchanges, vocab);
}

EncoderInput assemble_input(const DialogHistory& history, const std::vector<int>& tag_classes,
                            const PanoramicObservation& obs, const World& world, const Vocabulary& vocab,
                            int max_len) {
  EncoderInput in;
  for (int c : tag_classes) {
    in.tag_ids.push_back(vocab.id(world.object_vocab.at(static_cast<std::size_t>(c))));
    in.tag_classes.push_back(c);
  }
  in.tag_ids.push_back(Vocabulary::kSep);
  in.tag_classes.push_back(-1);
  for (const auto& view : obs.views)
    for (const auto& r : view.regions)
      in.regions.push_back({r.feature, r.geometry, view.heading, view.elevation, r.tag});
  const int fixed = static_cast<int>(in.tag_ids.size() + in.regions.size());
  std::span<const QaExchange> ex(history.exchanges);
  in.word_ids = words_for(history.target_hint, ex, vocab);
  while (!ex.empty() && static_cast<int>(in.word_ids.size()) + fixed > max_len) {
    ex = ex.subspan(1);
    in.word_ids = words_for(history.target_hint, ex, vocab);
  }
  return in;
}

EncoderInput encoder_input_at(const World& world, const DialogHistory& history, NodeId node,
                              const Vocabulary& vocab, int max_len, bool use_tags) {
  const auto obs = observe(world, AgentState{node, 0.0, 0.0});
  return assemble_input(history, use_tags ? panorama_tags(obs) : std::vector<int>{}, obs, world, vocab, max_len);
}

Encoder::Encoder(const EncoderConfig& cfg, int vocab_size, std::uint64_t seed) : cfg_(cfg), vocab_size_(vocab_size) {
  cfg_.validate();
  if (vocab_size <= Vocabulary::kNumSpecial) throw ConfigError("vocabulary is too small");
  std::mt19937_64 rng(seed);
  const int H = cfg_.hidden;
  auto weight = [&](const std::string& name, int r, int c) { nn::init_normal(params_.add(name, r, c), rng, kInitStd); };
  auto ones = [&](const std::string& name, int c) { params_.add(name, 1, c).value.fill(1.0); };
  auto zeros = [&](const std::string& name, int c) { params_.add(name, 1, c); };
  weight("word_emb", vocab_size, H);
  weight("pos_emb", cfg_.max_len, H);
  weight("seg_emb", 3, H);
  weight("region_proj_w", cfg_.feature_dim + kGeometryDim, H);
  zeros("region_proj_b", H);
  ones("emb_ln_g", H);
  zeros("emb_ln_b", H);
  for (int l = 0; l < cfg_.layers; ++l) {
    weight(layer_name(l, "qkv_w"), H, 3 * H);
    zeros(layer_name(l, "qkv_b"), 3 * H);
    weight(layer_name(l, "out_w"), H, H);
    zeros(layer_name(l, "out_b"), H);
    ones(layer_name(l, "ln1_g"), H);
    zeros(layer_name(l, "ln1_b"), H);
    weight(layer_name(l, "ff1_w"), H, cfg_.ff);
    zeros(layer_name(l, "ff1_b"), cfg_.ff);
    weight(layer_name(l, "ff2_w"), cfg_.ff, H);
    zeros(layer_name(l, "ff2_b"), H);
    ones(layer_name(l, "ln2_g"), H);
    zeros(layer_name(l, "ln2_b"), H);
  }
}

Encoder::Output Encoder::forward(Graph& g, const EncoderInput& in) {
  const int L = in.length();
  if (L > cfg_.max_len)
    throw ConfigError("encoder input length " + std::to_string(L) + " exceeds encoder.max_len " +
                      std::to_string(cfg_.max_len));
  if (in.word_ids.empty()) throw std::invalid_argument("encoder input has no word segment");
  const int H = cfg_.hidden;
  const int P = cfg_.feature_dim;
  const int nw = static_cast<int>(in.word_ids.size());
  const int nt = static_cast<int>(in.tag_ids.size());
  const int nr = static_cast<int>(in.regions.size());
  auto P_ = [&](const std::string& n) { return g.param(params_.at(n)); };

  // Text rows: words, tags and trailing pads share the token/position path.
  std::vector<int> ids, pos, seg;
  for (int i = 0; i < nw; ++i) ids.push_back(in.word_ids[i]), seg.push_back(kSegWord);
  for (int i = 0; i < nt; ++i) ids.push_back(in.tag_ids[i]), seg.push_back(kSegTag);
  for (int i = 0; i < nw + nt; ++i) pos.push_back(i);
  for (int id : ids)
    if (id < 0 || id >= vocab_size_) throw std::invalid_argument("token id out of range");
  Var word_emb = P_("word_emb"), pos_emb = P_("pos_emb"), seg_emb = P_("seg_emb");
  Var text = g.add(g.add(g.gather_rows(word_emb, ids), g.gather_rows(pos_emb, pos)), g.gather_rows(seg_emb, seg));
  std::vector<Var> parts{text};

  Output out;
  if (nr > 0) {
    Matrix r(nr, P + kGeometryDim);
    Matrix d(nr, H);
    for (int i = 0; i < nr; ++i) {
      const auto& reg = in.regions[i];
      if (static_cast<int>(reg.feature.size()) != P) throw std::invalid_argument("region feature has the wrong dimension");
      std::copy(reg.feature.begin(), reg.feature.end(), r.row(i).begin());
      std::copy(reg.geometry.begin(), reg.geometry.end(), r.row(i).begin() + P);
      const auto dir = build_direction_embedding(reg.heading, reg.elevation);
      for (int k = 0; k < H; ++k) d(i, k) = dir[k % kDirectionDim];
    }
    out.regions = g.grad_enabled() ? g.leaf(std::move(r)) : g.input(std::move(r));
    const std::vector<int> region_seg(static_cast<std::size_t>(nr), kSegRegion);
    Var proj = g.add_row(g.matmul(out.regions, P_("region_proj_w")), P_("region_proj_b"));
    parts.push_back(g.add(g.add(proj, g.input(std::move(d))), g.gather_rows(seg_emb, region_seg)));
  }
  if (in.pad > 0) {
    std::vector<int> pad_ids(static_cast<std::size_t>(in.pad), Vocabulary::kPad), pad_pos, pad_seg(pad_ids.size(), kSegWord);
    for (int i = 0; i < in.pad; ++i) pad_pos.push_back(nw + nt + i);
    parts.push_back(g.add(g.add(g.gather_rows(word_emb, pad_ids), g.gather_rows(pos_emb, pad_pos)),
                          g.gather_rows(seg_emb, pad_seg)));
  }
  Var x = parts.size() == 1 ? parts[0] : g.concat_rows(parts);
  x = g.layer_norm(x, P_("emb_ln_g"), P_("emb_ln_b"));

  std::vector<bool> hidden_col(static_cast<std::size_t>(L), false);
  for (int i = 0; i < in.pad; ++i) hidden_col[static_cast<std::size_t>(nw + nt + nr + i)] = true;
  for (int r : in.masked_regions) {
    if (r < 0 || r >= nr) throw std::invalid_argument("masked region index out of range");
    hidden_col[static_cast<std::size_t>(nw + nt + r)] = true;
  }
  Var mask;
  if (std::find(hidden_col.begin(), hidden_col.end(), true) != hidden_col.end()) {
    Matrix m(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j)
        if (hidden_col[j]) m(i, j) = kMaskedScore;
    mask = g.input(std::move(m));
  }

  const int dh = H / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < cfg_.layers; ++l) {
    Var qkv = g.add_row(g.matmul(x, P_(layer_name(l, "qkv_w"))), P_(layer_name(l, "qkv_b")));
    std::vector<Var> heads;
    for (int h = 0; h < cfg_.heads; ++h) {
      Var q = g.slice_cols(qkv, h * dh, dh);
      Var k = g.slice_cols(qkv, H + h * dh, dh);
      Var v = g.slice_cols(qkv, 2 * H + h * dh, dh);
      Var s = g.scale(g.matmul_nt(q, k), inv_sqrt);
      if (mask.valid()) s = g.add(s, mask);
      heads.push_back(g.matmul(g.softmax_rows(s), v));
    }
    Var att = heads.size() == 1 ? heads[0] : g.concat_cols(heads);
    att = g.add_row(g.matmul(att, P_(layer_name(l, "out_w"))), P_(layer_name(l, "out_b")));
    x = g.layer_norm(g.add(x, att), P_(layer_name(l, "ln1_g")), P_(layer_name(l, "ln1_b")));
    Var f = g.gelu(g.add_row(g.matmul(x, P_(layer_name(l, "ff1_w"))), P_(layer_name(l, "ff1_b"))));
    f = g.add_row(g.matmul(f, P_(layer_name(l, "ff2_w"))), P_(layer_name(l, "ff2_b")));
    x = g.layer_norm(g.add(x, f), P_(layer_name(l, "ln2_g")), P_(layer_name(l, "ln2_b")));
  }
  out.hidden = x;
  out.cls = g.slice_rows(x, 0, 1);
  out.length = L;
  return out;
}

Matrix Encoder::encode(const EncoderInput& in) {
  Graph g(false);
  return g.value(forward(g, in).hidden);
}

void save_encoder(const std::filesystem::path& path, const Encoder& enc, const Vocabulary& vocab,
                  const nlohmann::json& extra) {
  nn::Archive a;
  a.kind = "encoder";
  a.config_json = nlohmann::json{{"encoder", to_json(enc.config())}, {"vocab", vocab.tokens()}, {"meta", extra}}.dump();
  a.add_store("encoder", enc.params());
  nn::write_archive(path, a);
}

LoadedEncoder load_encoder(const std::filesystem::path& path) {
  nn::Archive a = nn::read_archive(path);
  if (a.kind != "encoder") throw DataError(path.string() + ": expected an encoder checkpoint, found '" + a.kind + "'");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(a.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint config: " + e.what());
  }
  Vocabulary vocab = Vocabulary::from_tokens(cfg.at("vocab").get<std::vector<std::string>>());
  Encoder enc(encoder_config_from_json(cfg.at("encoder")), vocab.size(), 0);
  a.load_store("encoder", enc.params());
  return {std::move(enc), std::move(vocab), cfg.value("meta", nlohmann::json::object())};
}

}  // namespace dialnav
