#include "dialnav/gameplay.hpp"

#include <algorithm>
#include <fstream>

#include "dialnav/errors.hpp"
#include "dialnav/metrics.hpp"

namespace dialnav {

using nlohmann::json;

std::string_view to_string(GameMode m) { return m == GameMode::heuristic4 ? "heuristic4" : "general"; }

GameMode game_mode_from_string(std::string_view s) {
  if (s == "heuristic4") return GameMode::heuristic4;
  if (s == "general") return GameMode::general;
  throw ConfigError("unknown game mode '" + std::string(s) + "' (expected heuristic4 or general)");
}

void GameConfig::validate() const {
  if (max_turns < 1) throw ConfigError("gameplay.max_turns must be >= 1");
  if (steps_per_turn < 1) throw ConfigError("gameplay.steps_per_turn must be >= 1");
  if (ask_period < 1) throw ConfigError("gameplay.ask_period must be >= 1");
  if (guide_lookahead < 1) throw ConfigError("gameplay.guide_lookahead must be >= 1");
}

json to_json(const GameConfig& c) {
  return {{"mode", to_string(c.mode)},        {"max_turns", c.max_turns},
          {"steps_per_turn", c.steps_per_turn}, {"ask_period", c.ask_period},
          {"guide_lookahead", c.guide_lookahead}};
}

GameConfig game_config_from_json(const json& j) {
  GameConfig c;
  if (j.contains("mode")) c.mode = game_mode_from_string(j.at("mode").get<std::string>());
  c.max_turns = j.value("max_turns", c.max_turns);
  c.steps_per_turn = j.value("steps_per_turn", c.steps_per_turn);
  c.ask_period = j.value("ask_period", c.ask_period);
  c.guide_lookahead = j.value("guide_lookahead", c.guide_lookahead);
  return c;
}

GameTask task_from_instance(const CvdnInstance& x) {
  return {x.id, x.world_id, x.target_object, x.target_hint, x.start, x.start_heading, x.goal_region};
}

json to_json(const GameTask& t) {
  return {{"id", t.id},
          {"world_id", t.world_id},
          {"target_object", t.target_object},
          {"target_hint", join_tokens(t.target_hint)},
          {"start", t.start},
          {"start_heading", t.start_heading},
          {"goal_region", t.goal_region}};
}

GameTask game_task_from_json(const json& j) {
  GameTask t;
  t.id = j.at("id").get<std::string>();
  t.world_id = j.at("world_id").get<std::string>();
  t.target_object = j.at("target_object").get<std::string>();
  t.target_hint = split_tokens(j.at("target_hint").get<std::string>());
  t.start = j.at("start").get<NodeId>();
  t.start_heading = j.at("start_heading").get<double>();
  t.goal_region = j.at("goal_region").get<int>();
  return t;
}

LearnedGameNavigator::LearnedGameNavigator(Navigator& nav, const QuestionHead* head)
    : nav_(nav), head_(head), dec_(nav.initial_state()) {}

void LearnedGameNavigator::begin_segment(const World&, const DialogHistory&, const AgentState&) {
  dec_ = nav_.initial_state();
}

GameAction LearnedGameNavigator::act(const World& world, const DialogHistory& history, const AgentState& s) {
  auto [dist, next] = nav_.decode_step(nav_.encode(world, history, s.node), world, s, dec_);
  const int pick = dist.argmax();
  GameAction a;
  a.probability = dist.probs[static_cast<std::size_t>(pick)];
  a.label = dist.label(pick);
  if (dist.is_stop(pick)) {
    a.stop = true;
  } else {
    next.prev = apply_candidate(world, s, dist, pick).second;
    if (dist.space == ActionSpace::viewpoint)
      a.move = dist.choices[static_cast<std::size_t>(pick)];
    else
      a.turn = dist.actions[static_cast<std::size_t>(pick)];
  }
  dec_ = std::move(next);
  return a;
}

AskDecision LearnedGameNavigator::wants_question(const World& world, const DialogHistory& history,
                                                 const AgentState& s, int steps_since_question) {
  if (head_ == nullptr) return {0.0, false};
  return should_ask(*head_, ask_features(nav_.encode(world, history, s.node), dec_, steps_since_question));
}

GameAction OracleGameNavigator::act(const World& world, const DialogHistory&, const AgentState& s) {
  GameAction a;
  if (world.node_region[s.node] == goal_region_) {
    a.stop = true;
    a.label = "STOP";
    return a;
  }
  const auto path = shortest_path(world, s.node, nearest_region_node(world, s.node, goal_region_));
  a.move = ViewpointChoice::to(path.at(1));
  a.label = std::to_string(path[1]);
  return a;
}

Tokens scripted_questioner(const World& world, const GameTask& task, std::span<const AgentState> visited) {
  std::string seen;
  if (!visited.empty()) {
    const AgentState& s = visited.back();
    const int tag = salient_tag(world, s.node, view_index_for(s.heading, s.elevation));
    if (tag >= 0) seen = world.object_vocab[static_cast<std::size_t>(tag)];
  }
  return question_template(task.target_object, seen);
}

Tokens scripted_guide(const World& world, const AgentState& s, int goal_region, int l) {
  return guide_answer_template(world, s, goal_region, l);
}

namespace {

std::vector<int> steps_of(const std::vector<json>& events, const char* type, bool positive_only) {
  std::vector<int> out;
  for (const auto& e : events) {
    if (e.at("type") != type) continue;
    if (positive_only && !e.at("ask").get<bool>()) continue;
    out.push_back(e.at("t").get<int>());
  }
  return out;
}

json state_fields(json e, const AgentState& s) {
  e["node"] = s.node;
  e["heading"] = s.heading;
  e["elevation"] = s.elevation;
  return e;
}

}  // namespace

std::vector<int> EpisodeLog::question_steps() const { return steps_of(events, "question", false); }
std::vector<int> EpisodeLog::ask_positive_steps() const { return steps_of(events, "ask", true); }

std::vector<json> EpisodeLog::records() const {
  std::vector<json> out;
  out.push_back(header);
  out.insert(out.end(), events.begin(), events.end());
  out.push_back({{"type", "end"},
                 {"termination", termination},
                 {"turns", turns},
                 {"length", length},
                 {"path", path},
                 {"metrics", metrics}});
  return out;
}

json episode_metrics(const World& world, const GameTask& task, const std::vector<NodeId>& path) {
  const auto ref = shortest_path(world, task.start, nearest_region_node(world, task.start, task.goal_region));
  const EvalEpisode ep = make_region_episode(world, path, ref, task.goal_region);
  json m = to_json(ep);
  m["goal_reached"] = world.node_region[path.back()] == task.goal_region;
  return m;
}

EpisodeLog run_episode(GameNavigator& navigator, const Questioner& questioner, const Guide& guide, const World& world,
                       const GameTask& task, const GameConfig& cfg) {
  cfg.validate();
  if (task.start < 0 || task.start >= world.num_nodes()) throw DataError("task " + task.id + " starts off the graph");
  EpisodeLog log;
  log.header = {{"type", "header"},
                {"schema", kEpisodeLogSchema},
                {"task", to_json(task)},
                {"config", to_json(cfg)},
                {"space", to_string(navigator.space())}};

  DialogHistory history{task.target_hint, {}};
  AgentState s{task.start, task.start_heading, 0.0};
  std::vector<AgentState> visited{s};
  log.path.push_back(s.node);
  int t = 0, seg = 0, since_question = 0;

  auto open_turn = [&](bool with_question) {
    if (with_question) {
      QaExchange qa{questioner(world, task, visited), guide(world, s, task.goal_region, cfg.guide_lookahead)};
      log.events.push_back({{"type", "question"}, {"t", t}, {"tokens", join_tokens(qa.question)}});
      log.events.push_back({{"type", "answer"}, {"t", t}, {"tokens", join_tokens(qa.answer)}});
      history.exchanges.push_back(std::move(qa));
      since_question = 0;
    }
    ++log.turns;
    seg = 0;
    log.events.push_back({{"type", "turn"}, {"turn", log.turns}, {"t", t}});
    navigator.begin_segment(world, history, s);
  };

  open_turn(false);
  while (log.termination.empty()) {
    const GameAction a = navigator.act(world, history, s);
    const int kinds = int(a.stop) + int(a.move.has_value()) + int(a.turn.has_value());
    std::string problem;
    if (kinds != 1) problem = "action must be exactly one of stop, move or turn";
    else if (a.move && a.move->is_stop()) problem = "viewpoint STOP must be sent as stop";
    else if (a.move && !world.adjacent(s.node, *a.move->node))
      problem = "move to node " + std::to_string(*a.move->node) + " is not adjacent to " + std::to_string(s.node);
    else if (a.turn && *a.turn == TurnAction::stop) problem = "turn-based STOP must be sent as stop";
    else if ((a.move && navigator.space() != ActionSpace::viewpoint) ||
             (a.turn && navigator.space() != ActionSpace::turn_based))
      problem = "action does not belong to the navigator's action space";
    if (!problem.empty()) {
      log.events.push_back(state_fields({{"type", "error"}, {"t", t}, {"message", problem}}, s));
      log.termination = "aborted";
      break;
    }

    if (a.stop) {
      log.events.push_back(state_fields({{"type", "step"}, {"t", t}, {"action", "STOP"}, {"p", a.probability}}, s));
      if (world.node_region[s.node] == task.goal_region) {
        log.termination = "declared-goal";
      } else if (log.turns >= cfg.max_turns) {
        log.termination = "max-turns";
      } else {
        open_turn(false);
      }
      continue;
    }

    json e{{"type", "step"}, {"p", a.probability}};
    const NodeId before = s.node;
    if (a.move) {
      e["action"] = "move";
      e["to"] = *a.move->node;
      s = step_viewpoint(world, s, *a.move);
    } else {
      e["action"] = std::string(to_string(*a.turn));
      s = step_turn_based(world, s, *a.turn);
    }
    ++t;
    ++seg;
    e["t"] = t;
    log.events.push_back(state_fields(std::move(e), s));
    if (s.node != before) {
      log.path.push_back(s.node);
      ++since_question;
    }
    visited.push_back(s);

    bool ask = false;
    if (cfg.mode == GameMode::heuristic4) {
      ask = t % cfg.ask_period == 0;
      log.events.push_back({{"type", "ask"}, {"t", t}, {"p", ask ? 1.0 : 0.0}, {"ask", ask}});
    } else {
      const AskDecision d = navigator.wants_question(world, history, s, since_question);
      ask = d.ask;
      log.events.push_back({{"type", "ask"}, {"t", t}, {"p", d.probability}, {"ask", ask}});
    }
    if (ask || seg >= cfg.steps_per_turn) {
      if (log.turns >= cfg.max_turns)
        log.termination = "max-turns";
      else
        open_turn(ask);
    }
  }
  log.length = t;
  log.metrics = episode_metrics(world, task, log.path);
  return log;
}

void write_episode_log(const std::filesystem::path& path, const EpisodeLog& log) {
  write_jsonl(path, log.records());
}

EpisodeLog read_episode_log(const std::filesystem::path& path) {
  std::vector<json> recs;
  read_jsonl(path, [&](const json& j) { recs.push_back(j); });
  if (recs.size() < 2 || recs.front().value("type", "") != "header" || recs.back().value("type", "") != "end")
    throw DataError("episode log " + path.string() + " lacks a header or end record");
  if (recs.front().value("schema", 0) != kEpisodeLogSchema)
    throw DataError("episode log " + path.string() + " has an unsupported schema version");
  EpisodeLog log;
  log.header = recs.front();
  log.events.assign(recs.begin() + 1, recs.end() - 1);
  const json& end = recs.back();
  log.termination = end.at("termination").get<std::string>();
  log.turns = end.at("turns").get<int>();
  log.length = end.at("length").get<int>();
  log.path = end.at("path").get<std::vector<NodeId>>();
  log.metrics = end.at("metrics");
  return log;
}

ReplayResult replay_episode(const World& world, const EpisodeLog& log) {
  const GameTask task = game_task_from_json(log.header.at("task"));
  if (task.start < 0 || task.start >= world.num_nodes()) throw DataError("logged task starts off the graph");
  AgentState s{task.start, task.start_heading, 0.0};
  ReplayResult r;
  r.path.push_back(s.node);
  for (const auto& e : log.events) {
    if (e.at("type") != "step") continue;
    const std::string action = e.at("action").get<std::string>();
    if (action == "move") {
      const NodeId to = e.at("to").get<NodeId>();
      if (!world.adjacent(s.node, to))
        throw DataError("logged move at t=" + e.at("t").dump() + " leaves the graph");
      s = step_viewpoint(world, s, ViewpointChoice::to(to));
    } else if (action != "STOP") {
      s = step_turn_based(world, s, turn_action_from_string(action));
    }
    if (e.at("node").get<NodeId>() != s.node) throw DataError("logged state diverges at t=" + e.at("t").dump());
    if (s.node != r.path.back()) r.path.push_back(s.node);
  }
  r.metrics = episode_metrics(world, task, r.path);
  r.matches = r.path == log.path && r.metrics == log.metrics;
  return r;
}

}  // namespace dialnav
