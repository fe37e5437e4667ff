#include "dialnav/navigator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dialnav/errors.hpp"
#include "dialnav/metrics.hpp"
#include "dialnav/nn/archive.hpp"
#include "dialnav/nn/optim.hpp"
#include "dialnav/rng.hpp"

namespace dialnav {
namespace {

using nn::Graph;
using nn::Matrix;
using nn::Var;

constexpr int kPoseDim = 4;
constexpr int kCandidateGeomDim = 6;
constexpr std::uint64_t kStreamImitation = 0x696d69;
constexpr std::uint64_t kStreamAsk = 0x61736b;

PrevAction::Kind kind_of(TurnAction a) {
  switch (a) {
    case TurnAction::forward: return PrevAction::forward;
    case TurnAction::left: return PrevAction::left;
    case TurnAction::right: return PrevAction::right;
    case TurnAction::up: return PrevAction::up;
    case TurnAction::down: return PrevAction::down;
    case TurnAction::stop: return PrevAction::stop;
  }
  return PrevAction::start;
}

Matrix prev_action_features(const PrevAction& p) {
  Matrix m(1, kPrevActionDim);
  m(0, static_cast<int>(p.kind)) = 1.0;
  if (p.kind == PrevAction::move || p.kind == PrevAction::forward) {
    m(0, 8) = std::sin(p.heading);
    m(0, 9) = std::cos(p.heading);
    m(0, 10) = std::sin(p.elevation);
    m(0, 11) = std::cos(p.elevation);
  }
  return m;
}

std::string world_key(const World& w) {
  std::ostringstream os;
  os << w.seed << ':' << w.feature_seed << ':' << w.num_nodes();
  if (!w.positions.empty()) os << ':' << w.positions[0].x << ',' << w.positions[0].y;
  return os.str();
}

// Mean region feature of the whole panorama and of each view.
struct NodeFeatures {
  std::vector<double> pooled;
  std::vector<std::vector<double>> views;
};

NodeFeatures node_features(const World& world, NodeId node) {
  const auto obs = observe(world, AgentState{node, 0.0, 0.0});
  const int P = world.config.feature_dim;
  NodeFeatures f{std::vector<double>(static_cast<std::size_t>(P), 0.0), {}};
  int total = 0;
  for (const auto& v : obs.views) {
    std::vector<double> mean(static_cast<std::size_t>(P), 0.0);
    for (const auto& r : v.regions)
      for (int i = 0; i < P; ++i) {
        mean[static_cast<std::size_t>(i)] += r.feature[static_cast<std::size_t>(i)];
        f.pooled[static_cast<std::size_t>(i)] += r.feature[static_cast<std::size_t>(i)];
      }
    if (!v.regions.empty())
      for (auto& x : mean) x /= static_cast<double>(v.regions.size());
    total += static_cast<int>(v.regions.size());
    f.views.push_back(std::move(mean));
  }
  if (total > 0)
    for (auto& x : f.pooled) x /= total;
  return f;
}

Var sigmoid_slice(Graph& g, Var z, int i, int d) { return g.sigmoid(g.slice_cols(z, i * d, d)); }

}  // namespace

std::string_view to_string(ActionSpace s) { return s == ActionSpace::viewpoint ? "viewpoint" : "turn-based"; }

ActionSpace action_space_from_string(std::string_view s) {
  if (s == "viewpoint") return ActionSpace::viewpoint;
  if (s == "turn-based" || s == "turn_based") return ActionSpace::turn_based;
  throw ConfigError("unknown action space '" + std::string(s) + "' (expected viewpoint or turn-based)");
}

void NavigatorConfig::validate() const {
  if (decoder_dim < 2) throw ConfigError("navigator.decoder_dim must be >= 2");
  if (action_dim < 1) throw ConfigError("navigator.action_dim must be >= 1");
  if (max_steps < 0) throw ConfigError("navigator.max_steps must be >= 0");
  if (cache_entries < 1) throw ConfigError("navigator.cache_entries must be >= 1");
}

nlohmann::json to_json(const NavigatorConfig& c) {
  return {{"space", to_string(c.space)},
          {"decoder_dim", c.decoder_dim},
          {"action_dim", c.action_dim},
          {"finetune_encoder", c.finetune_encoder},
          {"use_object_tags", c.use_object_tags},
          {"max_steps", c.max_steps},
          {"cache_entries", c.cache_entries}};
}

NavigatorConfig navigator_config_from_json(const nlohmann::json& j) {
  NavigatorConfig c;
  if (j.contains("space")) c.space = action_space_from_string(j.at("space").get<std::string>());
  c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
  c.action_dim = j.value("action_dim", c.action_dim);
  c.finetune_encoder = j.value("finetune_encoder", c.finetune_encoder);
  c.use_object_tags = j.value("use_object_tags", c.use_object_tags);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.cache_entries = j.value("cache_entries", c.cache_entries);
  return c;
}

int ActionDistribution::argmax() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

bool ActionDistribution::is_stop(int i) const {
  return space == ActionSpace::viewpoint ? choices.at(static_cast<std::size_t>(i)).is_stop()
                                         : actions.at(static_cast<std::size_t>(i)) == TurnAction::stop;
}

std::string ActionDistribution::label(int i) const {
  if (space == ActionSpace::turn_based) return std::string(to_string(actions.at(static_cast<std::size_t>(i))));
  const auto& c = choices.at(static_cast<std::size_t>(i));
  return c.is_stop() ? "STOP" : "GOTO " + std::to_string(*c.node);
}

ActionDistribution candidates_for(const World& world, const AgentState& s, ActionSpace space) {
  ActionDistribution d;
  d.space = space;
  if (space == ActionSpace::viewpoint) {
    d.choices.push_back(ViewpointChoice::stop());
    for (NodeId n : world.adjacency.at(static_cast<std::size_t>(s.node))) d.choices.push_back(ViewpointChoice::to(n));
  } else {
    for (int i = 0; i < kNumTurnActions; ++i) d.actions.push_back(static_cast<TurnAction>(i));
  }
  d.probs.assign(space == ActionSpace::viewpoint ? d.choices.size() : d.actions.size(), 0.0);
  return d;
}

std::vector<TurnAction> expand_edge(const World& world, const AgentState& s, NodeId next) {
  if (!world.adjacent(s.node, next))
    throw InvalidAction("node " + std::to_string(next) + " is not adjacent to " + std::to_string(s.node));
  for (int k = 0; k <= kHeadingBins / 2; ++k)
    for (TurnAction turn : {TurnAction::right, TurnAction::left}) {
      AgentState t = s;
      for (int i = 0; i < k; ++i) t = step_turn_based(world, t, turn);
      if (step_turn_based(world, t, TurnAction::forward).node == next) {
        std::vector<TurnAction> out(static_cast<std::size_t>(k), turn);
        out.push_back(TurnAction::forward);
        return out;
      }
      if (k == 0) break;
    }
  throw InvalidAction("edge " + std::to_string(s.node) + "->" + std::to_string(next) + " is not reachable by turning");
}

std::vector<TeacherStep> teacher_steps(const World& world, const NdhInstance& inst, ActionSpace space) {
  validate_path(world, inst.id, inst.path);
  std::vector<TeacherStep> out;
  AgentState s{inst.path.front(), inst.start_heading, 0.0};
  PrevAction prev;
  for (std::size_t i = 0; i + 1 < inst.path.size(); ++i) {
    const NodeId next = inst.path[i + 1];
    if (space == ActionSpace::viewpoint) {
      const auto& adj = world.adjacency[static_cast<std::size_t>(s.node)];
      const int idx = 1 + static_cast<int>(std::find(adj.begin(), adj.end(), next) - adj.begin());
      out.push_back({s, prev, idx});
      prev = {PrevAction::move, bearing(world, s.node, next), edge_elevation(world, s.node, next)};
      s = step_viewpoint(world, s, ViewpointChoice::to(next));
    } else {
      for (TurnAction a : expand_edge(world, s, next)) {
        out.push_back({s, prev, static_cast<int>(a)});
        prev = {kind_of(a), s.heading, s.elevation};
        s = step_turn_based(world, s, a);
      }
    }
  }
  out.push_back({s, prev, space == ActionSpace::viewpoint ? 0 : static_cast<int>(TurnAction::stop)});
  return out;
}

Navigator::Navigator(const NavigatorConfig& cfg, Encoder encoder, Vocabulary vocab, std::uint64_t seed)
    : cfg_(cfg), encoder_(std::move(encoder)), vocab_(std::move(vocab)) {
  cfg_.validate();
  if (vocab_.size() != encoder_.vocab_size()) throw ConfigError("vocabulary does not match the encoder");
  const int D = cfg_.decoder_dim, A = cfg_.action_dim, H = encoder_.config().hidden;
  const int P = encoder_.config().feature_dim;
  std::mt19937_64 rng(seed);
  auto weight = [&](const char* name, int r, int c) { nn::init_xavier(params_.add(name, r, c), rng); };
  auto zeros = [&](const char* name, int c) { params_.add(name, 1, c); };
  weight("act_w", kPrevActionDim, A);
  zeros("act_b", A);
  weight("lstm_w", A + 2 * P + kPoseDim + D, 4 * D);
  auto& lb = params_.add("lstm_b", 1, 4 * D);
  for (int i = D; i < 2 * D; ++i) lb.value[static_cast<std::size_t>(i)] = 1.0;  // forget gate
  weight("att_q", D, H);
  weight("out_w", D + 2 * H, D);
  zeros("out_b", D);
  weight("cand_w", kCandidateGeomDim + P, D);
  zeros("cand_b", D);
  nn::init_normal(params_.add("stop_vec", 1, D), rng, 0.1);
  weight("turn_w", D, kNumTurnActions);
  zeros("turn_b", kNumTurnActions);
}

std::uint64_t Navigator::checksum() const { return hash_seed({encoder_.params().checksum(), params_.checksum()}); }

DecoderState Navigator::initial_state() const {
  return {Matrix(1, cfg_.decoder_dim), Matrix(1, cfg_.decoder_dim), PrevAction{}};
}

EncoderInput Navigator::encoder_input(const World& world, const DialogHistory& history, NodeId node) const {
  return encoder_input_at(world, history, node, vocab_, encoder_.config().max_len, cfg_.use_object_tags);
}

const EncodedContext& Navigator::encode(const World& world, const DialogHistory& history, NodeId node) {
  std::string key = world_key(world) + '|' + std::to_string(node) + '|' + join_tokens(history.target_hint);
  for (const auto& e : history.exchanges) key += '|' + join_tokens(e.question) + '|' + join_tokens(e.answer);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  if (static_cast<int>(cache_.size()) >= cfg_.cache_entries) cache_.clear();
  Graph g(false);
  auto out = encoder_.forward(g, encoder_input(world, history, node));
  EncodedContext ctx{g.value(out.hidden), g.value(out.cls)};
  return cache_.emplace(std::move(key), std::move(ctx)).first->second;
}

Navigator::StepVars Navigator::initial_vars(Graph& g) const {
  return {g.input(Matrix(1, cfg_.decoder_dim)), g.input(Matrix(1, cfg_.decoder_dim))};
}

std::pair<Var, Var> Navigator::context_vars(Graph& g, const World& world, const DialogHistory& history, NodeId node) {
  if (cfg_.finetune_encoder && g.grad_enabled()) {
    auto out = encoder_.forward(g, encoder_input(world, history, node));
    return {out.hidden, out.cls};
  }
  const auto& ctx = encode(world, history, node);
  return {g.input(ctx.hidden), g.input(ctx.cls)};
}

Navigator::StepOut Navigator::step(Graph& g, Var hidden, Var cls, const World& world, const AgentState& s,
                                   const PrevAction& prev, StepVars state) {
  const int D = cfg_.decoder_dim;
  const int P = encoder_.config().feature_dim;
  if (world.config.feature_dim != P) throw ConfigError("world feature_dim does not match the encoder");
  auto Pm = [&](const char* n) { return g.param(params_.at(n)); };
  const NodeFeatures nf = node_features(world, s.node);

  Matrix obs(1, 2 * P + kPoseDim);
  const auto& view = nf.views[static_cast<std::size_t>(view_index_for(s.heading, s.elevation))];
  for (int i = 0; i < P; ++i) {
    obs(0, i) = nf.pooled[static_cast<std::size_t>(i)];
    obs(0, P + i) = view[static_cast<std::size_t>(i)];
  }
  obs(0, 2 * P) = std::sin(s.heading);
  obs(0, 2 * P + 1) = std::cos(s.heading);
  obs(0, 2 * P + 2) = std::sin(s.elevation);
  obs(0, 2 * P + 3) = std::cos(s.elevation);

  Var act = g.tanh(g.add_row(g.matmul(g.input(prev_action_features(prev)), Pm("act_w")), Pm("act_b")));
  const Var in_parts[] = {act, g.input(std::move(obs)), state.h};
  Var z = g.add_row(g.matmul(g.concat_cols(in_parts), Pm("lstm_w")), Pm("lstm_b"));
  Var i = sigmoid_slice(g, z, 0, D), f = sigmoid_slice(g, z, 1, D), o = sigmoid_slice(g, z, 3, D);
  Var cand = g.tanh(g.slice_cols(z, 2 * D, D));
  Var c = g.add(g.mul(f, state.c), g.mul(i, cand));
  Var h = g.mul(o, g.tanh(c));

  const double scale = 1.0 / std::sqrt(static_cast<double>(encoder_.config().hidden));
  Var scores = g.scale(g.matmul_nt(g.matmul(h, Pm("att_q")), hidden), scale);
  Var context = g.matmul(g.softmax_rows(scores), hidden);
  const Var out_parts[] = {h, context, cls};
  Var ht = g.tanh(g.add_row(g.matmul(g.concat_cols(out_parts), Pm("out_w")), Pm("out_b")));

  Var logits;
  if (cfg_.space == ActionSpace::turn_based) {
    logits = g.add_row(g.matmul(ht, Pm("turn_w")), Pm("turn_b"));
  } else {
    const auto& adj = world.adjacency.at(static_cast<std::size_t>(s.node));
    std::vector<Var> rows{Pm("stop_vec")};
    if (!adj.empty()) {
      Matrix feats(static_cast<int>(adj.size()), kCandidateGeomDim + P);
      for (std::size_t k = 0; k < adj.size(); ++k) {
        const double phi = bearing(world, s.node, adj[k]);
        const double om = edge_elevation(world, s.node, adj[k]);
        const double rel = angle_diff(phi, s.heading);
        const double geo[kCandidateGeomDim] = {std::sin(phi), std::cos(phi), std::sin(rel),
                                               std::cos(rel), std::sin(om),  std::cos(om)};
        const int r = static_cast<int>(k);
        for (int q = 0; q < kCandidateGeomDim; ++q) feats(r, q) = geo[q];
        const auto& vf = nf.views[static_cast<std::size_t>(view_index_for(phi, om))];
        for (int q = 0; q < P; ++q) feats(r, kCandidateGeomDim + q) = vf[static_cast<std::size_t>(q)];
      }
      rows.push_back(g.tanh(g.add_row(g.matmul(g.input(std::move(feats)), Pm("cand_w")), Pm("cand_b"))));
    }
    Var cands = rows.size() == 1 ? rows[0] : g.concat_rows(rows);
    logits = g.matmul_nt(ht, cands);
  }
  return {logits, {h, c}};
}

std::pair<ActionDistribution, DecoderState> Navigator::decode_step(const EncodedContext& ctx, const World& world,
                                                                   const AgentState& s, const DecoderState& dec) {
  Graph g(false);
  StepVars st{g.input(dec.h), g.input(dec.c)};
  auto out = step(g, g.input(ctx.hidden), g.input(ctx.cls), world, s, dec.prev, st);
  ActionDistribution d = candidates_for(world, s, cfg_.space);
  const Matrix p = g.value(g.softmax_rows(out.logits));
  for (std::size_t k = 0; k < d.probs.size(); ++k) d.probs[k] = p[k];
  return {std::move(d), DecoderState{g.value(out.state.h), g.value(out.state.c), dec.prev}};
}

Var Navigator::imitation_loss(Graph& g, const WorldSet& worlds, const std::vector<const NdhInstance*>& batch) {
  std::vector<Var> terms;
  for (const NdhInstance* inst : batch) {
    const World& w = world_for(worlds, inst->world_id);
    StepVars st = initial_vars(g);
    for (const auto& ts : teacher_steps(w, *inst, cfg_.space)) {
      auto [hidden, cls] = context_vars(g, w, inst->history, ts.state.node);
      auto out = step(g, hidden, cls, w, ts.state, ts.prev, st);
      const int target[] = {ts.target};
      terms.push_back(g.cross_entropy(out.logits, target));
      st = out.state;
    }
  }
  if (terms.empty()) throw std::invalid_argument("empty imitation batch");
  return g.scale(g.add_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

void ImitationConfig::validate() const {
  if (steps < 0) throw ConfigError("finetune.steps must be >= 0");
  if (batch_size < 1) throw ConfigError("finetune.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("finetune.lr must be > 0");
  if (vln_weight < 0.0 || vln_weight > 1.0) throw ConfigError("finetune.vln_weight must be in [0, 1]");
}

nlohmann::json to_json(const ImitationConfig& c) {
  return {{"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr}, {"clip_norm", c.clip_norm},
          {"vln_weight", c.vln_weight}};
}

ImitationConfig imitation_config_from_json(const nlohmann::json& j) {
  ImitationConfig c;
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.vln_weight = j.value("vln_weight", c.vln_weight);
  return c;
}

namespace {

// Endless shuffled pass over a pool.
class Shuffler {
 public:
  explicit Shuffler(std::size_t n) : order_(n) { std::iota(order_.begin(), order_.end(), std::size_t{0}); }
  std::size_t next(std::mt19937_64& rng) {
    if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng);
    const std::size_t v = order_[pos_];
    pos_ = (pos_ + 1) % order_.size();
    return v;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainLog train_imitation(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& ndh,
                         const std::vector<NdhInstance>& vln, const ImitationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (ndh.empty()) throw DataError("no navigation instances to train on");
  for (const auto* pool : {&ndh, &vln})
    for (const auto& x : *pool) validate_path(world_for(worlds, x.world_id), x.id, x.path);

  nn::AdamConfig oc;
  oc.lr = cfg.lr;
  oc.clip_norm = cfg.clip_norm;
  std::vector<nn::ParameterStore*> stores{&nav.decoder_params()};
  if (nav.config().finetune_encoder) stores.push_back(&nav.encoder().params());
  nn::Adam opt(stores, oc);
  std::mt19937_64 rng = stream_rng(seed, kStreamImitation);
  Shuffler ndh_order(ndh.size());
  Shuffler vln_order(std::max<std::size_t>(vln.size(), 1));
  const bool mix = !vln.empty() && cfg.vln_weight > 0.0;
  std::bernoulli_distribution coin(cfg.vln_weight);

  TrainLog log;
  for (int s = 0; s < cfg.steps; ++s) {
    std::vector<const NdhInstance*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (mix && coin(rng))
        batch.push_back(&vln[vln_order.next(rng)]);
      else
        batch.push_back(&ndh[ndh_order.next(rng)]);
    }
    Graph g;
    Var loss = nav.imitation_loss(g, worlds, batch);
    log.loss.push_back(g.scalar(loss));
    g.backward(loss);
    opt.step();
    if (nav.config().finetune_encoder) nav.clear_cache();
  }
  return log;
}

double teacher_forced_accuracy(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& data) {
  int correct = 0, total = 0;
  for (const auto& inst : data) {
    const World& w = world_for(worlds, inst.world_id);
    DecoderState dec = nav.initial_state();
    for (const auto& ts : teacher_steps(w, inst, nav.config().space)) {
      dec.prev = ts.prev;
      auto [dist, next] = nav.decode_step(nav.encode(w, inst.history, ts.state.node), w, ts.state, dec);
      correct += dist.argmax() == ts.target;
      ++total;
      dec = std::move(next);
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

std::pair<AgentState, PrevAction> apply_candidate(const World& world, const AgentState& s,
                                                  const ActionDistribution& dist, int pick) {
  if (pick < 0 || pick >= static_cast<int>(dist.size()) || dist.is_stop(pick))
    throw std::invalid_argument("apply_candidate needs a non-STOP candidate");
  if (dist.space == ActionSpace::viewpoint) {
    const ViewpointChoice& c = dist.choices[static_cast<std::size_t>(pick)];
    const NodeId n = *c.node;
    PrevAction p{PrevAction::move, bearing(world, s.node, n), edge_elevation(world, s.node, n)};
    return {step_viewpoint(world, s, c), p};
  }
  const TurnAction a = dist.actions[static_cast<std::size_t>(pick)];
  PrevAction p{kind_of(a), s.heading, s.elevation};
  return {step_turn_based(world, s, a), p};
}

Trajectory rollout(Navigator& nav, const World& world, const NdhInstance& instance, int max_steps, Decoding decoding,
                   std::uint64_t seed) {
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  std::mt19937_64 rng(seed);
  Trajectory tr;
  AgentState s{instance.start, instance.start_heading, 0.0};
  tr.nodes.push_back(s.node);
  DecoderState dec = nav.initial_state();
  for (int t = 0; t < max_steps; ++t) {
    auto [dist, next] = nav.decode_step(nav.encode(world, instance.history, s.node), world, s, dec);
    int pick = dist.argmax();
    if (decoding == Decoding::sample) {
      std::discrete_distribution<int> d(dist.probs.begin(), dist.probs.end());
      pick = d(rng);
    }
    tr.steps.push_back({s, dist.label(pick), dist.probs[static_cast<std::size_t>(pick)]});
    dec = std::move(next);
    if (dist.is_stop(pick)) {
      tr.stopped = true;
      break;
    }
    std::tie(s, dec.prev) = apply_candidate(world, s, dist, pick);
    if (s.node != tr.nodes.back()) tr.nodes.push_back(s.node);
  }
  tr.hit_step_limit = !tr.stopped;
  tr.final_state = s;
  return tr;
}

QuestionHead::QuestionHead(int input_dim, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::init_xavier(params.add("w1", input_dim, hidden), rng);
  params.add("b1", 1, hidden);
  nn::init_xavier(params.add("w2", hidden, 1), rng);
  params.add("b2", 1, 1);
}

Var QuestionHead::logit(Graph& g, Var features) {
  auto P = [&](const char* n) { return g.param(params.at(n)); };
  Var h = g.tanh(g.add_row(g.matmul(features, P("w1")), P("b1")));
  return g.add_row(g.matmul(h, P("w2")), P("b2"));
}

void AskTrainConfig::validate() const {
  if (hidden < 1) throw ConfigError("ask.hidden must be >= 1");
  if (steps < 0) throw ConfigError("ask.steps must be >= 0");
  if (batch_size < 1) throw ConfigError("ask.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("ask.lr must be > 0");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("ask.val_fraction must be in [0, 1)");
}

nlohmann::json to_json(const AskTrainConfig& c) {
  return {{"hidden", c.hidden}, {"steps", c.steps}, {"batch_size", c.batch_size}, {"lr", c.lr},
          {"val_fraction", c.val_fraction}};
}

AskTrainConfig ask_train_config_from_json(const nlohmann::json& j) {
  AskTrainConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  return c;
}

Matrix ask_features(const EncodedContext& ctx, const DecoderState& dec, int steps_since_question) {
  const int H = ctx.cls.cols(), D = dec.h.cols();
  Matrix f(1, H + D + kAskStepBuckets);
  for (int i = 0; i < H; ++i) f(0, i) = ctx.cls(0, i);
  for (int i = 0; i < D; ++i) f(0, H + i) = dec.h(0, i);
  f(0, H + D + std::clamp(steps_since_question, 0, kAskStepBuckets - 1)) = 1.0;
  return f;
}

Matrix ask_features(Navigator& nav, const World& world, const QuestionAskingExample& ex) {
  const int steps = ex.steps_since_question;
  if (ex.trajectory.empty() || steps < 0 || steps >= static_cast<int>(ex.trajectory.size()))
    throw DataError("ask example " + ex.instance_id + " has an inconsistent trajectory");
  NdhInstance seg;
  seg.id = ex.instance_id;
  seg.world_id = ex.world_id;
  seg.history = ex.history;
  seg.path.assign(ex.trajectory.end() - steps - 1, ex.trajectory.end());
  seg.start = seg.path.front();
  seg.start_heading = ex.heading;
  DecoderState dec = nav.initial_state();
  NodeId node = seg.start;
  for (const auto& ts : teacher_steps(world, seg, nav.config().space)) {
    dec.prev = ts.prev;
    dec = nav.decode_step(nav.encode(world, ex.history, ts.state.node), world, ts.state, dec).second;
    node = ts.state.node;
  }
  return ask_features(nav.encode(world, ex.history, node), dec, steps);
}

AskDecision should_ask(const QuestionHead& head, const Matrix& features) {
  Graph g(false);
  auto& h = const_cast<QuestionHead&>(head);  // evaluation only; no gradients are recorded
  const double z = g.scalar(h.logit(g, g.input(features)));
  const double p = 1.0 / (1.0 + std::exp(-z));
  return {p, p >= head.threshold};
}

namespace {

// Threshold maximizing balanced accuracy; ties go to the one nearest 0.5.
double pick_threshold(const std::vector<double>& probs, const std::vector<int>& labels) {
  std::vector<double> sorted = probs;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> cands{0.5};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cands.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  double best = 0.5, best_score = -1.0;
  for (double t : cands) {
    std::vector<int> preds;
    for (double p : probs) preds.push_back(p >= t ? 1 : 0);
    const double score = classification_report(preds, labels).balanced_accuracy.value_or(0.0);
    if (score > best_score + 1e-12 || (std::abs(score - best_score) <= 1e-12 && std::abs(t - 0.5) < std::abs(best - 0.5))) {
      best = t;
      best_score = score;
    }
  }
  return best;
}

}  // namespace

Var ask_loss(Graph& g, QuestionHead& head, Matrix features, std::span<const double> labels,
             std::span<const double> weights) {
  return g.bce_with_logits(head.logit(g, g.input(std::move(features))), labels, weights);
}

AskTrainResult train_question_head(Navigator& nav, const WorldSet& worlds,
                                   const std::vector<QuestionAskingExample>& examples, const AskTrainConfig& cfg,
                                   std::uint64_t seed) {
  cfg.validate();
  std::vector<Matrix> tr_x, va_x;
  std::vector<int> tr_y, va_y;
  for (const auto& ex : examples) {
    const bool val = (hash_seed({seed, hash_string(ex.instance_id)}) % 1000) <
                     static_cast<std::uint64_t>(cfg.val_fraction * 1000.0);
    Matrix f = ask_features(nav, world_for(worlds, ex.world_id), ex);
    (val ? va_x : tr_x).push_back(std::move(f));
    (val ? va_y : tr_y).push_back(ex.label != 0);
  }
  const int pos = static_cast<int>(std::count(tr_y.begin(), tr_y.end(), 1));
  const int neg = static_cast<int>(tr_y.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("question-head training labels contain a single class");
  const double w_pos = tr_y.size() / (2.0 * pos), w_neg = tr_y.size() / (2.0 * neg);

  AskTrainResult r{QuestionHead(tr_x.front().cols(), cfg.hidden, hash_seed({seed, kStreamAsk})), 0.0, {}};
  nn::AdamConfig oc;
  oc.lr = cfg.lr;
  nn::Adam opt(r.head.params, oc);
  std::mt19937_64 rng = stream_rng(seed, kStreamAsk);
  Shuffler order(tr_x.size());
  for (int s = 0; s < cfg.steps; ++s) {
    const int n = std::min<int>(cfg.batch_size, static_cast<int>(tr_x.size()));
    Matrix x(n, tr_x.front().cols());
    std::vector<double> y, w;
    for (int b = 0; b < n; ++b) {
      const std::size_t k = order.next(rng);
      std::copy(tr_x[k].row(0).begin(), tr_x[k].row(0).end(), x.row(b).begin());
      y.push_back(tr_y[k]);
      w.push_back(tr_y[k] ? w_pos : w_neg);
    }
    Graph g;
    Var loss = ask_loss(g, r.head, std::move(x), y, w);
    r.loss.push_back(g.scalar(loss));
    g.backward(loss);
    opt.step();
  }

  // Threshold on the validation split when it has both classes, else on training data.
  const bool val_ok = std::count(va_y.begin(), va_y.end(), 1) > 0 && std::count(va_y.begin(), va_y.end(), 0) > 0;
  const auto& xs = val_ok ? va_x : tr_x;
  const auto& ys = val_ok ? va_y : tr_y;
  std::vector<double> probs;
  for (const auto& x : xs) probs.push_back(should_ask(r.head, x).probability);
  r.head.threshold = pick_threshold(probs, ys);
  std::vector<int> preds;
  for (double p : probs) preds.push_back(p >= r.head.threshold ? 1 : 0);
  r.val_balanced_accuracy = classification_report(preds, ys).balanced_accuracy.value_or(0.0);
  return r;
}

void save_navigator(const std::filesystem::path& path, const Navigator& nav, const QuestionHead* head,
                    const nlohmann::json& extra) {
  nn::Archive a;
  a.kind = "navigator";
  nlohmann::json cfg{{"navigator", to_json(nav.config())},
                     {"encoder", to_json(nav.encoder().config())},
                     {"vocab", nav.vocab().tokens()},
                     {"meta", extra}};
  a.add_store("encoder", nav.encoder().params());
  a.add_store("decoder", nav.decoder_params());
  if (head != nullptr) {
    cfg["ask"] = {{"threshold", head->threshold},
                  {"input_dim", head->params.at("w1").value.rows()},
                  {"hidden", head->params.at("w1").value.cols()}};
    a.add_store("ask", head->params);
  }
  a.config_json = cfg.dump();
  nn::write_archive(path, a);
}

LoadedNavigator load_navigator(const std::filesystem::path& path) {
  nn::Archive a = nn::read_archive(path);
  if (a.kind != "navigator")
    throw DataError(path.string() + ": expected a navigator checkpoint, found '" + a.kind + "'");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(a.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint config: " + e.what());
  }
  Vocabulary vocab = Vocabulary::from_tokens(cfg.at("vocab").get<std::vector<std::string>>());
  Encoder enc(encoder_config_from_json(cfg.at("encoder")), vocab.size(), 0);
  a.load_store("encoder", enc.params());
  LoadedNavigator out;
  out.navigator = std::make_unique<Navigator>(navigator_config_from_json(cfg.at("navigator")), std::move(enc),
                                              std::move(vocab), 0);
  a.load_store("decoder", out.navigator->decoder_params());
  if (cfg.contains("ask")) {
    const auto& ask = cfg.at("ask");
    QuestionHead h(ask.at("input_dim").get<int>(), ask.at("hidden").get<int>(), 0);
    a.load_store("ask", h.params);
    h.threshold = ask.at("threshold").get<double>();
    out.head = std::move(h);
  }
  out.meta = cfg.value("meta", nlohmann::json::object());
  return out;
}

}  // namespace dialnav
