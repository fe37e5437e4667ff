#include "dialnav/run.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

#include "dialnav/errors.hpp"
#include "dialnav/metrics.hpp"
#include "dialnav/rng.hpp"

namespace dialnav {

using nlohmann::json;

namespace {

constexpr std::uint64_t kStreamTrainDialogs = 0x747264;  // "trd"
constexpr std::uint64_t kStreamValDialogs = 0x766c64;    // "vld"
constexpr std::uint64_t kStreamVln = 0x766c6e;
constexpr std::uint64_t kStreamCaptions = 0x636170;
constexpr std::uint64_t kStreamNavigator = 0x6e6176;  // "nav"

json world_cfg_json(const WorldConfig& c) {
  return {{"num_nodes", c.num_nodes},
          {"num_regions", c.num_regions},
          {"object_vocab_size", c.object_vocab_size},
          {"max_edge_len", c.max_edge_len},
          {"min_node_spacing", c.min_node_spacing},
          {"max_degree", c.max_degree},
          {"regions_per_view_min", c.regions_per_view_min},
          {"regions_per_view_max", c.regions_per_view_max},
          {"feature_dim", c.feature_dim}};
}

WorldConfig world_cfg_from(const json& j) {
  WorldConfig c;
  c.num_nodes = j.value("num_nodes", c.num_nodes);
  c.num_regions = j.value("num_regions", c.num_regions);
  c.object_vocab_size = j.value("object_vocab_size", c.object_vocab_size);
  c.max_edge_len = j.value("max_edge_len", c.max_edge_len);
  c.min_node_spacing = j.value("min_node_spacing", c.min_node_spacing);
  c.max_degree = j.value("max_degree", c.max_degree);
  c.regions_per_view_min = j.value("regions_per_view_min", c.regions_per_view_min);
  c.regions_per_view_max = j.value("regions_per_view_max", c.regions_per_view_max);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  return c;
}

json gen_cfg_json(const GenConfig& c) {
  return {{"question_period_min", c.question_period_min},
          {"question_period_max", c.question_period_max},
          {"guide_lookahead", c.guide_lookahead},
          {"detour_prob", c.detour_prob},
          {"max_exchanges", c.max_exchanges},
          {"min_start_hops", c.min_start_hops}};
}

GenConfig gen_cfg_from(const json& j) {
  GenConfig c;
  c.question_period_min = j.value("question_period_min", c.question_period_min);
  c.question_period_max = j.value("question_period_max", c.question_period_max);
  c.guide_lookahead = j.value("guide_lookahead", c.guide_lookahead);
  c.detour_prob = j.value("detour_prob", c.detour_prob);
  c.max_exchanges = j.value("max_exchanges", c.max_exchanges);
  c.min_start_hops = j.value("min_start_hops", c.min_start_hops);
  return c;
}

// Every key of `given` must exist in `canonical`, recursively.
void check_keys(const json& given, const json& canonical, const std::string& prefix) {
  if (!given.is_object()) return;
  for (const auto& [k, v] : given.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!canonical.contains(k)) throw ConfigError("unknown config key '" + path + "'");
    if (v.is_object()) {
      if (!canonical.at(k).is_object()) throw ConfigError("config key '" + path + "' is not a section");
      check_keys(v, canonical.at(k), path);
    }
  }
}

std::vector<NdhInstance> ndh_of(const std::vector<CvdnInstance>& dialogs, SupervisionMode mode) {
  std::vector<NdhInstance> out;
  for (const auto& d : dialogs)
    for (auto& x : extract_ndh(d, mode))
      if (x.path.size() >= 2) out.push_back(std::move(x));
  return out;
}

std::vector<QuestionAskingExample> ask_of(const std::vector<CvdnInstance>& dialogs) {
  std::vector<QuestionAskingExample> out;
  for (const auto& d : dialogs)
    for (auto& x : extract_question_labels(d)) out.push_back(std::move(x));
  return out;
}

std::vector<CvdnInstance> dialogs_for(const WorldSet& worlds, int per_world, const GenConfig& gen,
                                      std::uint64_t seed, std::uint64_t stream) {
  std::vector<CvdnInstance> out;
  int w = 0;
  for (const auto& [id, world] : worlds) {
    for (int i = 0; i < per_world; ++i)
      out.push_back(simulate_cvdn_instance(world, id, hash_seed({seed, stream, static_cast<std::uint64_t>(w),
                                                                 static_cast<std::uint64_t>(i)}),
                                           gen));
    ++w;
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  if (seen_worlds < 1 || seen_worlds > 500) throw ConfigError("seen_worlds must be in [1, 500]");
  if (unseen_worlds < 1 || unseen_worlds > 500) throw ConfigError("unseen_worlds must be in [1, 500]");
  if (seed > 18'000'000'000'000'000ULL) throw ConfigError("seed is too large to derive world seeds");
  data.gen.validate();
  data.vln.validate();
  if (data.train_dialogs_per_world < 1) throw ConfigError("data.train_dialogs_per_world must be >= 1");
  if (data.val_dialogs_per_world < 1) throw ConfigError("data.val_dialogs_per_world must be >= 1");
  if (data.captions < 2) throw ConfigError("data.captions must be >= 2");
  encoder.validate();
  if (encoder.feature_dim != world.feature_dim)
    throw ConfigError("encoder.feature_dim must equal world.feature_dim");
  pretrain.flags.validate();
  pretrain.train.validate();
  finetune.navigator.validate();
  finetune.imitation.validate();
  ask.validate();
  gameplay.game.validate();
  if (gameplay.episodes < 1) throw ConfigError("gameplay.episodes must be >= 1");
}

RunConfig default_run_config() { return RunConfig{}; }

std::string_view to_string(GoalKind g) { return g == GoalKind::subgoal ? "subgoal" : "region"; }

GoalKind goal_kind_from_string(std::string_view s) {
  if (s == "subgoal") return GoalKind::subgoal;
  if (s == "region") return GoalKind::region;
  throw ConfigError("unknown eval.goal '" + std::string(s) + "' (expected subgoal or region)");
}

json to_json(const RunConfig& c) {
  json nav = to_json(c.finetune.navigator);
  nav.erase("use_object_tags");  // follows the pretraining flags
  return {{"seed", c.seed},
          {"world", world_cfg_json(c.world)},
          {"seen_worlds", c.seen_worlds},
          {"unseen_worlds", c.unseen_worlds},
          {"data",
           {{"gen", gen_cfg_json(c.data.gen)},
            {"train_dialogs_per_world", c.data.train_dialogs_per_world},
            {"val_dialogs_per_world", c.data.val_dialogs_per_world},
            {"vln", {{"min_hops", c.data.vln.min_hops}, {"max_hops", c.data.vln.max_hops}, {"count", c.data.vln.count}}},
            {"captions", c.data.captions}}},
          {"encoder", to_json(c.encoder)},
          {"pretrain", {{"flags", to_json(c.pretrain.flags)}, {"train", to_json(c.pretrain.train)}}},
          {"finetune",
           {{"navigator", nav},
            {"imitation", to_json(c.finetune.imitation)},
            {"supervision", to_string(c.finetune.supervision)}}},
          {"ask", to_json(c.ask)},
          {"eval", {{"goal", to_string(c.eval.goal)}}},
          {"gameplay", {{"game", to_json(c.gameplay.game)}, {"episodes", c.gameplay.episodes}}}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  check_keys(j, to_json(c), "");
  const json empty = json::object();
  auto sec = [&](const json& parent, const char* key) -> const json& {
    return parent.contains(key) ? parent.at(key) : empty;
  };
  try {
    c.seed = j.value("seed", c.seed);
    c.world = world_cfg_from(sec(j, "world"));
    c.seen_worlds = j.value("seen_worlds", c.seen_worlds);
    c.unseen_worlds = j.value("unseen_worlds", c.unseen_worlds);
    const json& d = sec(j, "data");
    c.data.gen = gen_cfg_from(sec(d, "gen"));
    c.data.train_dialogs_per_world = d.value("train_dialogs_per_world", c.data.train_dialogs_per_world);
    c.data.val_dialogs_per_world = d.value("val_dialogs_per_world", c.data.val_dialogs_per_world);
    const json& v = sec(d, "vln");
    c.data.vln.min_hops = v.value("min_hops", c.data.vln.min_hops);
    c.data.vln.max_hops = v.value("max_hops", c.data.vln.max_hops);
    c.data.vln.count = v.value("count", c.data.vln.count);
    c.data.captions = d.value("captions", c.data.captions);
    c.encoder = encoder_config_from_json(sec(j, "encoder"));
    const json& p = sec(j, "pretrain");
    if (p.contains("flags")) c.pretrain.flags = curriculum_flags_from_json(p.at("flags"));
    c.pretrain.train = pretrain_config_from_json(sec(p, "train"));
    const json& f = sec(j, "finetune");
    c.finetune.navigator = navigator_config_from_json(sec(f, "navigator"));
    c.finetune.imitation = imitation_config_from_json(sec(f, "imitation"));
    if (f.contains("supervision"))
      c.finetune.supervision = supervision_mode_from_string(f.at("supervision").get<std::string>());
    c.ask = ask_train_config_from_json(sec(j, "ask"));
    const json& e = sec(j, "eval");
    if (e.contains("goal")) c.eval.goal = goal_kind_from_string(e.at("goal").get<std::string>());
    const json& g = sec(j, "gameplay");
    c.gameplay.game = game_config_from_json(sec(g, "game"));
    c.gameplay.episodes = g.value("episodes", c.gameplay.episodes);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config value has the wrong type: ") + ex.what());
  } catch (const DataError& ex) {
    throw ConfigError(ex.what());
  }
  return c;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a value");
    start = dot + 1;
  }
}

std::string config_hash(const RunConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(to_json(c).dump())));
  return buf;
}

std::string_view to_string(Split s) { return s == Split::seen ? "seen" : "unseen"; }

std::string world_id(Split split, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%03d", split == Split::seen ? "seen" : "unseen", i);
  return buf;
}

std::uint64_t world_seed(std::uint64_t run_seed, Split split, int i) {
  return run_seed * 1000 + (split == Split::seen ? 0 : 500) + static_cast<std::uint64_t>(i);
}

WorldSet make_worlds(const RunConfig& c, Split split) {
  WorldSet out;
  const int n = split == Split::seen ? c.seen_worlds : c.unseen_worlds;
  for (int i = 0; i < n; ++i) {
    out.emplace(world_id(split, i), generate_world(world_seed(c.seed, split, i), c.world));
  }
  return out;
}

Dataset make_dataset(const RunConfig& c, const WorldSet& seen, const WorldSet& unseen) {
  Dataset d;
  d.train_dialogs = dialogs_for(seen, c.data.train_dialogs_per_world, c.data.gen, c.seed, kStreamTrainDialogs);
  d.train_ndh = ndh_of(d.train_dialogs, c.finetune.supervision);
  d.train_ask = ask_of(d.train_dialogs);
  int w = 0;
  for (const auto& [id, world] : seen)
    for (auto& x : generate_vln_instances(world, id, hash_seed({c.seed, kStreamVln, static_cast<std::uint64_t>(w++)}),
                                          c.data.vln))
      d.train_vln.push_back(std::move(x));
  d.val_seen_dialogs = dialogs_for(seen, c.data.val_dialogs_per_world, c.data.gen, c.seed, kStreamValDialogs);
  d.val_unseen_dialogs = dialogs_for(unseen, c.data.val_dialogs_per_world, c.data.gen, c.seed, kStreamValDialogs);
  // Evaluation always measures against the navigator's own path.
  d.val_seen_ndh = ndh_of(d.val_seen_dialogs, SupervisionMode::navigator);
  d.val_unseen_ndh = ndh_of(d.val_unseen_dialogs, SupervisionMode::navigator);
  d.val_seen_ask = ask_of(d.val_seen_dialogs);
  d.val_unseen_ask = ask_of(d.val_unseen_dialogs);
  return d;
}

PretrainData make_pretrain_data(const RunConfig& c, const WorldSet& seen, const Dataset& data) {
  PretrainData p;
  p.worlds = &seen;
  p.captions = make_caption_records(seen, c.data.captions, hash_seed({c.seed, kStreamCaptions}));
  p.navigation = make_navigation_records(seen, data.train_ndh);
  return p;
}

Navigator build_navigator(const RunConfig& c, Encoder encoder, Vocabulary vocab, bool object_tags) {
  NavigatorConfig nc = c.finetune.navigator;
  nc.use_object_tags = object_tags;
  return Navigator(nc, std::move(encoder), std::move(vocab), hash_seed({c.seed, kStreamNavigator}));
}

json evaluate_navigation(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& data, GoalKind goal) {
  std::vector<EvalEpisode> eps;
  json records = json::array();
  for (const auto& inst : data) {
    const World& w = world_for(worlds, inst.world_id);
    const Trajectory tr = rollout(nav, w, inst, nav.config().step_limit(), Decoding::greedy);
    EvalEpisode ep = goal == GoalKind::subgoal ? make_episode(w, tr.nodes, inst.path, inst.path.back())
                                               : make_region_episode(w, tr.nodes, inst.path, inst.goal_region);
    json r = to_json(ep);
    r["id"] = inst.id;
    r["world_id"] = inst.world_id;
    r["stopped"] = tr.stopped;
    r["actions"] = static_cast<int>(tr.steps.size());
    records.push_back(std::move(r));
    eps.push_back(std::move(ep));
  }
  return {{"aggregate", aggregate_metrics(eps)}, {"episodes", records}};
}

json evaluate_ask(Navigator& nav, const QuestionHead& head, const WorldSet& worlds,
                  const std::vector<QuestionAskingExample>& data) {
  std::vector<int> preds, labels;
  for (const auto& ex : data) {
    preds.push_back(should_ask(head, ask_features(nav, world_for(worlds, ex.world_id), ex)).ask ? 1 : 0);
    labels.push_back(ex.label != 0);
  }
  const auto r = classification_report(preds, labels);
  json out{{"examples", r.count}, {"accuracy", r.accuracy}, {"positives", std::count(labels.begin(), labels.end(), 1)}};
  out["balanced_accuracy"] = r.balanced_accuracy ? json(*r.balanced_accuracy) : json(nullptr);
  return out;
}

}  // namespace dialnav
