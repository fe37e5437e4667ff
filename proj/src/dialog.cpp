#include "dialnav/dialog.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "dialnav/errors.hpp"
#include "dialnav/rng.hpp"

namespace dialnav {
namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

int optimal_next(const World& w, NodeId from, int goal_region) {
  const NodeId target = nearest_region_node(w, from, goal_region);
  return shortest_path(w, from, target).at(1);
}

std::vector<NodeId> oracle_prefix(const World& w, NodeId from, int goal_region, int l) {
  auto path = shortest_path(w, from, nearest_region_node(w, from, goal_region));
  if (static_cast<int>(path.size()) > l + 1) path.resize(static_cast<std::size_t>(l) + 1);
  return path;
}

std::string step_object(const World& w, NodeId from, NodeId to) {
  const int view = next_node_direction(w, AgentState{from, 0, 0}, to).view_index;
  const int tag = salient_tag(w, from, view);
  return tag < 0 ? std::string() : w.object_vocab[tag];
}

// "go <dir> toward the <obj> then the <obj> ..." for the first `steps` edges of
// a path, with the first direction taken relative to `heading`.
void describe_route(const World& w, const std::vector<NodeId>& path, std::size_t steps, double heading,
                    Tokens& out) {
  out.insert(out.end(), {"go", std::string(relative_direction(heading, bearing(w, path[0], path[1])))});
  std::string last;
  for (std::size_t i = 0; i < steps; ++i) {
    std::string obj = step_object(w, path[i], path[i + 1]);
    if (obj.empty() || obj == last) continue;
    out.insert(out.end(), {i == 0 ? "toward" : "then", "the", obj});
    last = std::move(obj);
  }
}

Tokens vln_instruction(const World& w, const std::vector<NodeId>& path, double heading) {
  Tokens t;
  double h = heading;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (i > 0) t.push_back("then");
    t.insert(t.end(), {"go", std::string(relative_direction(h, bearing(w, path[i], path[i + 1])))});
    const std::string obj = step_object(w, path[i], path[i + 1]);
    if (!obj.empty()) t.insert(t.end(), {"toward", "the", obj});
    h = bearing(w, path[i], path[i + 1]);
  }
  t.insert(t.end(), {"and", "stop"});
  return t;
}

std::string seen_tag(const World& w, const AgentState& s) {
  const int tag = salient_tag(w, s.node, view_index_for(s.heading, 0.0));
  return tag < 0 ? std::string() : w.object_vocab[tag];
}

DialogHistory history_through(const CvdnInstance& inst, int t) {
  DialogHistory h{inst.target_hint, {}};
  for (int i = 1; i <= t; ++i) h.exchanges.push_back(inst.turns[i].qa);
  return h;
}

json history_json(const DialogHistory& h) {
  json ex = json::array();
  for (const auto& e : h.exchanges) ex.push_back({{"question", join_tokens(e.question)}, {"answer", join_tokens(e.answer)}});
  return {{"target_hint", join_tokens(h.target_hint)}, {"exchanges", std::move(ex)}};
}

DialogHistory history_from(const json& j) {
  DialogHistory h;
  h.target_hint = split_tokens(j.at("target_hint").get<std::string>());
  for (const auto& e : j.at("exchanges"))
    h.exchanges.push_back({split_tokens(e.at("question").get<std::string>()), split_tokens(e.at("answer").get<std::string>())});
  return h;
}

void check_schema(const json& j, const char* schema) {
  if (j.at("schema") != schema) throw DataError(std::string("expected a ") + schema + " record");
  if (j.at("version").get<int>() != kSchemaVersion) throw DataError("unsupported record version " + j.at("version").dump());
}

template <typename T, typename ToJson>
void save_items(const std::filesystem::path& path, const std::vector<T>& items, ToJson to) {
  std::vector<json> records;
  records.reserve(items.size());
  for (const auto& x : items) records.push_back(to(x));
  write_jsonl(path, records);
}

template <typename T, typename FromJson>
std::vector<T> load_items(const std::filesystem::path& path, FromJson from) {
  std::vector<T> out;
  read_jsonl(path, [&](const json& j) { out.push_back(from(j)); });
  return out;
}

}  // namespace

Tokens split_tokens(std::string_view text) {
  Tokens out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

std::string_view to_string(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::navigator: return "navigator";
    case SupervisionMode::oracle: return "oracle";
    case SupervisionMode::mixed: return "mixed";
  }
  return "?";
}

SupervisionMode supervision_mode_from_string(std::string_view s) {
  if (s == "navigator") return SupervisionMode::navigator;
  if (s == "oracle") return SupervisionMode::oracle;
  if (s == "mixed") return SupervisionMode::mixed;
  throw ConfigError("unknown supervision mode '" + std::string(s) + "' (navigator|oracle|mixed)");
}

void GenConfig::validate() const {
  if (question_period_min < 1 || question_period_max < question_period_min)
    throw ConfigError("data.question_period range is invalid");
  if (guide_lookahead < 1) throw ConfigError("data.guide_lookahead must be >= 1");
  if (detour_prob < 0 || detour_prob > 1) throw ConfigError("data.detour_prob must be in [0, 1]");
  if (max_exchanges < 0) throw ConfigError("data.max_exchanges must be >= 0");
  if (min_start_hops < 1) throw ConfigError("data.min_start_hops must be >= 1");
}

void VlnConfig::validate() const {
  if (min_hops < 1 || max_hops < min_hops) throw ConfigError("vln hop range is invalid");
  if (count < 0) throw ConfigError("vln count must be >= 0");
}

NodeId CvdnInstance::terminal() const {
  const auto& last = turns.back();
  return last.segment.empty() ? last.start : last.segment.back();
}

Tokens target_hint_template(const std::string& object, const std::string& region) {
  return {"find", "the", object, "in", "the", region};
}

Tokens question_template(const std::string& target_object, const std::string& seen) {
  Tokens q;
  if (!seen.empty()) q.insert(q.end(), {"i", "see", "a", seen, "."});
  q.insert(q.end(), {"where", "is", "the", target_object, "?"});
  return q;
}

std::string_view relative_direction(double heading, double bearing_to) {
  const double rel = angle_diff(bearing_to, heading);
  const double quarter = std::numbers::pi / 4;
  if (std::abs(rel) <= quarter) return "ahead";
  if (std::abs(rel) > 3 * quarter) return "behind";
  return rel > 0 ? "right" : "left";
}

int salient_tag(const World& world, NodeId node, int view) {
  auto tags = world.objects_in_view(node, view);
  return tags.empty() ? -1 : tags.front();
}

Tokens guide_answer_template(const World& world, const AgentState& s, int goal_region, int l) {
  if (l < 1) throw std::invalid_argument("guide lookahead must be >= 1");
  if (world.in_region(s.node, goal_region)) return {"you", "found", "it", ",", "stop", "here"};
  const auto path = shortest_path(world, s.node, nearest_region_node(world, s.node, goal_region));
  const std::size_t steps = std::min<std::size_t>(static_cast<std::size_t>(l), path.size() - 1);
  Tokens a;
  describe_route(world, path, steps, s.heading, a);
  if (steps == path.size() - 1)
    a.insert(a.end(), {"and", "stop", "in", "the", world.regions[static_cast<std::size_t>(goal_region)].name});
  return a;
}

CvdnInstance simulate_cvdn_instance(const World& world, const std::string& world_id, std::uint64_t seed,
                                    const GenConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(hash_seed({seed, 0x6376646eULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int goal = world.goal_region;

  CvdnInstance inst;
  inst.id = world_id + "-cvdn-" + std::to_string(seed);
  inst.world_id = world_id;
  inst.goal_region = goal;
  inst.goal_region_name = world.regions[static_cast<std::size_t>(goal)].name;

  // Target object: one of the three most common tags in the goal region.
  std::map<int, int> counts;
  for (NodeId n : world.goal().nodes)
    for (int v = 0; v < kNumViews; ++v)
      for (int t : world.objects_in_view(n, v)) ++counts[t];
  std::vector<std::pair<int, int>> ranked;
  for (auto [t, c] : counts) ranked.emplace_back(-c, t);
  std::sort(ranked.begin(), ranked.end());
  const std::size_t top = std::min<std::size_t>(3, ranked.size());
  inst.target_object = world.object_vocab[ranked[rng() % top].second];
  inst.target_hint = target_hint_template(inst.target_object, inst.goal_region_name);

  std::vector<NodeId> far, outside;
  for (NodeId n = 0; n < world.num_nodes(); ++n) {
    if (world.in_region(n, goal)) continue;
    outside.push_back(n);
    const auto p = shortest_path(world, n, nearest_region_node(world, n, goal));
    if (static_cast<int>(p.size()) - 1 >= cfg.min_start_hops) far.push_back(n);
  }
  if (outside.empty()) throw DataError("world " + world_id + " has no node outside the goal region");
  const auto& pool = far.empty() ? outside : far;
  inst.start = pool[rng() % pool.size()];
  inst.start_heading = static_cast<int>(rng() % kHeadingBins) * kRotationStep;

  std::uniform_int_distribution<int> period(cfg.question_period_min, cfg.question_period_max);
  AgentState s{inst.start, inst.start_heading, 0.0};
  for (int t = 0;; ++t) {
    DialogTurn turn;
    turn.start = s.node;
    turn.start_heading = s.heading;
    if (t > 0) turn.qa = {question_template(inst.target_object, seen_tag(world, s)),
                          guide_answer_template(world, s, goal, cfg.guide_lookahead)};
    turn.oracle_path = oracle_prefix(world, s.node, goal, cfg.guide_lookahead);
    const bool final = t == cfg.max_exchanges;
    const int k = period(rng);
    while ((final || static_cast<int>(turn.segment.size()) < k) && !world.in_region(s.node, goal)) {
      NodeId next = optimal_next(world, s.node, goal);
      const auto& nbrs = world.adjacency[s.node];
      if (!final && nbrs.size() > 1 && unit(rng) < cfg.detour_prob) {
        NodeId alt = nbrs[rng() % (nbrs.size() - 1)];
        if (alt == next) alt = nbrs.back();
        next = alt;
      }
      s = step_viewpoint(world, s, ViewpointChoice::to(next));
      turn.segment.push_back(next);
    }
    inst.turns.push_back(std::move(turn));
    if (world.in_region(s.node, goal)) break;
  }
  return inst;
}

std::vector<NdhInstance> extract_ndh(const CvdnInstance& inst, SupervisionMode mode) {
  std::vector<NdhInstance> out;
  for (int t = 0; t <= inst.m(); ++t) {
    const DialogTurn& turn = inst.turns[t];
    NdhInstance x;
    x.id = inst.id + "-t" + std::to_string(t);
    x.world_id = inst.world_id;
    x.history = history_through(inst, t);
    x.start = turn.start;
    x.start_heading = turn.start_heading;
    x.goal_region = inst.goal_region;
    x.mode = mode;
    std::vector<NodeId> navigator{turn.start};
    navigator.insert(navigator.end(), turn.segment.begin(), turn.segment.end());
    switch (mode) {
      case SupervisionMode::navigator: x.path = navigator; break;
      case SupervisionMode::oracle: x.path = turn.oracle_path; break;
      case SupervisionMode::mixed: {
        const bool on_path = std::find(navigator.begin(), navigator.end(), turn.oracle_path.back()) != navigator.end();
        x.path = on_path ? navigator : turn.oracle_path;
        break;
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<QuestionAskingExample> extract_question_labels(const CvdnInstance& inst) {
  std::vector<QuestionAskingExample> out;
  std::vector<NodeId> trajectory{inst.start};
  int steps = 0;
  for (int t = 0; t <= inst.m(); ++t) {
    const DialogTurn& turn = inst.turns[t];
    if (t > 0) {
      out.push_back({inst.id, inst.world_id, history_through(inst, t - 1), trajectory,
                     inst.turns[t - 1].start_heading, steps, 1});
      steps = 0;
    }
    const DialogHistory h = history_through(inst, t);
    for (NodeId next : turn.segment) {
      out.push_back({inst.id, inst.world_id, h, trajectory, turn.start_heading, steps, 0});
      trajectory.push_back(next);
      ++steps;
    }
  }
  return out;
}

std::vector<NdhInstance> generate_vln_instances(const World& world, const std::string& world_id, std::uint64_t seed,
                                                const VlnConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(hash_seed({seed, 0x766c6eULL}));
  std::vector<NdhInstance> out;
  for (int i = 0; i < cfg.count; ++i) {
    std::vector<NodeId> path;
    for (int attempt = 0; attempt < 64 && path.empty(); ++attempt) {
      const NodeId start = static_cast<NodeId>(rng() % static_cast<std::uint64_t>(world.num_nodes()));
      std::vector<std::vector<NodeId>> options;
      for (NodeId g = 0; g < world.num_nodes(); ++g) {
        auto p = shortest_path(world, start, g);
        const int hops = static_cast<int>(p.size()) - 1;
        if (hops >= cfg.min_hops && hops <= cfg.max_hops) options.push_back(std::move(p));
      }
      if (!options.empty()) path = options[rng() % options.size()];
    }
    if (path.empty()) throw DataError("world " + world_id + " has no path within the requested hop range");
    NdhInstance x;
    x.id = world_id + "-vln-" + std::to_string(seed) + "-" + std::to_string(i);
    x.world_id = world_id;
    x.source = "vln";
    x.start = path.front();
    x.start_heading = static_cast<int>(rng() % kHeadingBins) * kRotationStep;
    x.history.target_hint = vln_instruction(world, path, x.start_heading);
    x.path = std::move(path);
    x.mode = SupervisionMode::oracle;
    x.goal_region = world.node_region[x.path.back()];
    out.push_back(std::move(x));
  }
  return out;
}

void validate_path(const World& world, const std::string& instance_id, const std::vector<NodeId>& path) {
  if (path.empty()) throw DataError("instance " + instance_id + ": empty supervision path");
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!world.has_node(path[i]))
      throw DataError("instance " + instance_id + ": node " + std::to_string(path[i]) + " is not in the world");
    if (i > 0 && !world.adjacent(path[i - 1], path[i]))
      throw DataError("instance " + instance_id + ": path leaves the graph between " + std::to_string(path[i - 1]) +
                      " and " + std::to_string(path[i]));
  }
}

json to_json(const CvdnInstance& x) {
  json turns = json::array();
  for (const auto& t : x.turns)
    turns.push_back({{"question", join_tokens(t.qa.question)},
                     {"answer", join_tokens(t.qa.answer)},
                     {"start", t.start},
                     {"start_heading", t.start_heading},
                     {"oracle_path", t.oracle_path},
                     {"segment", t.segment}});
  return {{"schema", "dialnav.cvdn"},
          {"version", kSchemaVersion},
          {"id", x.id},
          {"world_id", x.world_id},
          {"target_hint", join_tokens(x.target_hint)},
          {"target_object", x.target_object},
          {"start", x.start},
          {"start_heading", x.start_heading},
          {"goal_region", x.goal_region},
          {"goal_region_name", x.goal_region_name},
          {"turns", std::move(turns)}};
}

json to_json(const NdhInstance& x) {
  return {{"schema", "dialnav.ndh"},
          {"version", kSchemaVersion},
          {"id", x.id},
          {"world_id", x.world_id},
          {"source", x.source},
          {"history", history_json(x.history)},
          {"start", x.start},
          {"start_heading", x.start_heading},
          {"path", x.path},
          {"mode", std::string(to_string(x.mode))},
          {"goal_region", x.goal_region}};
}

json to_json(const QuestionAskingExample& x) {
  return {{"schema", "dialnav.ask"},
          {"version", kSchemaVersion},
          {"instance_id", x.instance_id},
          {"world_id", x.world_id},
          {"history", history_json(x.history)},
          {"trajectory", x.trajectory},
          {"heading", x.heading},
          {"steps_since_question", x.steps_since_question},
          {"label", x.label}};
}

CvdnInstance cvdn_from_json(const json& j) {
  check_schema(j, "dialnav.cvdn");
  CvdnInstance x;
  x.id = j.at("id");
  x.world_id = j.at("world_id");
  x.target_hint = split_tokens(j.at("target_hint").get<std::string>());
  x.target_object = j.at("target_object");
  x.start = j.at("start");
  x.start_heading = j.at("start_heading");
  x.goal_region = j.at("goal_region");
  x.goal_region_name = j.at("goal_region_name");
  for (const auto& t : j.at("turns")) {
    DialogTurn turn;
    turn.qa = {split_tokens(t.at("question").get<std::string>()), split_tokens(t.at("answer").get<std::string>())};
    turn.start = t.at("start");
    turn.start_heading = t.at("start_heading");
    turn.oracle_path = t.at("oracle_path").get<std::vector<NodeId>>();
    turn.segment = t.at("segment").get<std::vector<NodeId>>();
    x.turns.push_back(std::move(turn));
  }
  if (x.turns.empty()) throw DataError("cvdn instance " + x.id + " has no turns");
  return x;
}

NdhInstance ndh_from_json(const json& j) {
  check_schema(j, "dialnav.ndh");
  NdhInstance x;
  x.id = j.at("id");
  x.world_id = j.at("world_id");
  x.source = j.at("source");
  x.history = history_from(j.at("history"));
  x.start = j.at("start");
  x.start_heading = j.at("start_heading");
  x.path = j.at("path").get<std::vector<NodeId>>();
  x.mode = supervision_mode_from_string(j.at("mode").get<std::string>());
  x.goal_region = j.at("goal_region");
  if (x.path.empty() || x.path.front() != x.start) throw DataError("ndh instance " + x.id + ": path must begin at start");
  return x;
}

QuestionAskingExample ask_example_from_json(const json& j) {
  check_schema(j, "dialnav.ask");
  QuestionAskingExample x;
  x.instance_id = j.at("instance_id");
  x.world_id = j.at("world_id");
  x.history = history_from(j.at("history"));
  x.trajectory = j.at("trajectory").get<std::vector<NodeId>>();
  x.heading = j.at("heading");
  x.steps_since_question = j.at("steps_since_question");
  x.label = j.at("label");
  if (x.label != 0 && x.label != 1) throw DataError("ask label must be 0 or 1");
  return x;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& r : records) os << r.dump() << '\n';
  if (!os) throw DataError("failed writing " + path.string());
}

void read_jsonl(const std::filesystem::path& path, const std::function<void(const json&)>& on_record) {
  std::ifstream is(path);
  if (!is) throw DataError("missing dataset: expected " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      on_record(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), number, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(path.string(), number, e.what());
    }
  }
}

void save_dataset(const std::filesystem::path& p, const std::vector<CvdnInstance>& items) {
  save_items(p, items, [](const CvdnInstance& x) { return to_json(x); });
}
void save_dataset(const std::filesystem::path& p, const std::vector<NdhInstance>& items) {
  save_items(p, items, [](const NdhInstance& x) { return to_json(x); });
}
void save_dataset(const std::filesystem::path& p, const std::vector<QuestionAskingExample>& items) {
  save_items(p, items, [](const QuestionAskingExample& x) { return to_json(x); });
}

std::vector<CvdnInstance> load_cvdn_dataset(const std::filesystem::path& p) {
  return load_items<CvdnInstance>(p, cvdn_from_json);
}
std::vector<NdhInstance> load_ndh_dataset(const std::filesystem::path& p) {
  return load_items<NdhInstance>(p, ndh_from_json);
}
std::vector<QuestionAskingExample> load_ask_dataset(const std::filesystem::path& p) {
  return load_items<QuestionAskingExample>(p, ask_example_from_json);
}

}  // namespace dialnav
