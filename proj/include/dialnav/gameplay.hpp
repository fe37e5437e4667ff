#pragma once

// Agent-agent game play: a navigator, a scripted questioner and a scripted
// guide take turns until the navigator stops inside the goal region or the
// turn cap is reached.
//
// Time-step t counts navigation actions taken so far. At every decision
// point t >= 1 the trigger is evaluated (heuristic4: t % 4 == 0; general:
// the ask head); a positive trigger closes the turn, and the next turn opens
// with a question and an answer. A turn also closes after steps_per_turn
// actions or a STOP outside the goal region, in which case the next turn
// opens without an exchange.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialnav/dialog.hpp"
#include "dialnav/navigator.hpp"

namespace dialnav {

inline constexpr int kEpisodeLogSchema = 1;

enum class GameMode { heuristic4, general };
std::string_view to_string(GameMode m);
GameMode game_mode_from_string(std::string_view s);

struct GameConfig {
  GameMode mode = GameMode::heuristic4;
  int max_turns = 20;
  int steps_per_turn = 10;
  int ask_period = 4;  // heuristic4 only
  int guide_lookahead = 5;
  void validate() const;
};
nlohmann::json to_json(const GameConfig& c);
GameConfig game_config_from_json(const nlohmann::json& j);

// What the navigator is told at t = 0.
struct GameTask {
  std::string id;
  std::string world_id;
  std::string target_object;
  Tokens target_hint;
  NodeId start = 0;
  double start_heading = 0.0;
  int goal_region = 0;
};
GameTask task_from_instance(const CvdnInstance& instance);
nlohmann::json to_json(const GameTask& t);
GameTask game_task_from_json(const nlohmann::json& j);

struct GameAction {
  bool stop = false;
  std::optional<ViewpointChoice> move;
  std::optional<TurnAction> turn;
  double probability = 1.0;
  std::string label;
};

class GameNavigator {
 public:
  virtual ~GameNavigator() = default;
  virtual ActionSpace space() const = 0;
  // Called whenever a turn opens; learned agents reset their decoder here.
  virtual void begin_segment(const World& world, const DialogHistory& history, const AgentState& s) = 0;
  virtual GameAction act(const World& world, const DialogHistory& history, const AgentState& s) = 0;
  virtual AskDecision wants_question(const World& world, const DialogHistory& history, const AgentState& s,
                                     int steps_since_question) = 0;
};

// Greedy decoding with the learned decoder; the question head drives general mode.
class LearnedGameNavigator : public GameNavigator {
 public:
  LearnedGameNavigator(Navigator& nav, const QuestionHead* head);
  ActionSpace space() const override { return nav_.config().space; }
  void begin_segment(const World& world, const DialogHistory& history, const AgentState& s) override;
  GameAction act(const World& world, const DialogHistory& history, const AgentState& s) override;
  AskDecision wants_question(const World& world, const DialogHistory& history, const AgentState& s,
                             int steps_since_question) override;

 private:
  Navigator& nav_;
  const QuestionHead* head_;
  DecoderState dec_;
  std::optional<ActionDistribution> last_;
};

// Walks the planner path to the goal region with viewpoint moves and stops inside it.
class OracleGameNavigator : public GameNavigator {
 public:
  explicit OracleGameNavigator(int goal_region, double ask_probability = 0.0)
      : goal_region_(goal_region), ask_probability_(ask_probability) {}
  ActionSpace space() const override { return ActionSpace::viewpoint; }
  void begin_segment(const World&, const DialogHistory&, const AgentState&) override {}
  GameAction act(const World& world, const DialogHistory& history, const AgentState& s) override;
  AskDecision wants_question(const World&, const DialogHistory&, const AgentState&, int) override {
    return {ask_probability_, ask_probability_ >= 0.5};
  }

 private:
  int goal_region_;
  double ask_probability_;
};

// Question from the target object and the most recently visible tag.
Tokens scripted_questioner(const World& world, const GameTask& task, std::span<const AgentState> visited);
Tokens scripted_guide(const World& world, const AgentState& s, int goal_region, int l = 5);

using Questioner = std::function<Tokens(const World&, const GameTask&, std::span<const AgentState>)>;
using Guide = std::function<Tokens(const World&, const AgentState&, int, int)>;

struct EpisodeLog {
  nlohmann::json header;
  std::vector<nlohmann::json> events;
  std::string termination;  // declared-goal | max-turns | aborted
  std::vector<NodeId> path;
  int turns = 0;
  int length = 0;  // navigation actions taken
  nlohmann::json metrics;

  std::vector<int> question_steps() const;
  std::vector<int> ask_positive_steps() const;
  std::vector<nlohmann::json> records() const;
};

EpisodeLog run_episode(GameNavigator& navigator, const Questioner& questioner, const Guide& guide, const World& world,
                       const GameTask& task, const GameConfig& cfg);

// Metrics over the executed path; the reference is the planner path to the goal region.
nlohmann::json episode_metrics(const World& world, const GameTask& task, const std::vector<NodeId>& path);

void write_episode_log(const std::filesystem::path& path, const EpisodeLog& log);
EpisodeLog read_episode_log(const std::filesystem::path& path);

struct ReplayResult {
  std::vector<NodeId> path;
  nlohmann::json metrics;
  bool matches = false;  // path and metrics equal the logged ones
};
// Re-executes the logged actions from the initial state and recomputes metrics.
// Throws DataError when an action does not apply or the log is malformed.
ReplayResult replay_episode(const World& world, const EpisodeLog& log);

}  // namespace dialnav
