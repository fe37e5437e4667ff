#pragma once

// Synthetic cooperative dialog-navigation episodes and the supervised
// instances extracted from them.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialnav/world.hpp"

namespace dialnav {

using Tokens = std::vector<std::string>;

Tokens split_tokens(std::string_view text);
std::string join_tokens(const Tokens& tokens);

enum class SupervisionMode { navigator, oracle, mixed };
std::string_view to_string(SupervisionMode m);
SupervisionMode supervision_mode_from_string(std::string_view s);

struct GenConfig {
  int question_period_min = 2;
  int question_period_max = 5;
  int guide_lookahead = 5;
  double detour_prob = 0.2;
  int max_exchanges = 8;
  int min_start_hops = 4;

  void validate() const;
};

struct VlnConfig {
  int min_hops = 2;
  int max_hops = 4;
  int count = 20;

  void validate() const;
};

struct QaExchange {
  Tokens question;
  Tokens answer;
  friend bool operator==(const QaExchange&, const QaExchange&) = default;
};

struct DialogHistory {
  Tokens target_hint;
  std::vector<QaExchange> exchanges;
  friend bool operator==(const DialogHistory&, const DialogHistory&) = default;
};

// Turn t: the exchange (Q_t, A_t) asked at `start` (absent for t = 0), the
// guide's oracle steps O_t from there, then the navigator's segment N_t.
struct DialogTurn {
  QaExchange qa;
  NodeId start = 0;
  double start_heading = 0.0;
  std::vector<NodeId> oracle_path;  // begins at start, at most l steps
  std::vector<NodeId> segment;      // excludes start
  friend bool operator==(const DialogTurn&, const DialogTurn&) = default;
};

struct CvdnInstance {
  std::string id;
  std::string world_id;
  Tokens target_hint;
  std::string target_object;
  NodeId start = 0;
  double start_heading = 0.0;
  int goal_region = 0;
  std::string goal_region_name;
  std::vector<DialogTurn> turns;

  int m() const noexcept { return static_cast<int>(turns.size()) - 1; }
  NodeId terminal() const;
  friend bool operator==(const CvdnInstance&, const CvdnInstance&) = default;
};

struct NdhInstance {
  std::string id;
  std::string world_id;
  std::string source = "cvdn";  // or "vln"
  DialogHistory history;
  NodeId start = 0;
  double start_heading = 0.0;
  std::vector<NodeId> path;  // supervision path, begins at start
  SupervisionMode mode = SupervisionMode::navigator;
  int goal_region = 0;
  friend bool operator==(const NdhInstance&, const NdhInstance&) = default;
};

struct QuestionAskingExample {
  std::string instance_id;
  std::string world_id;
  DialogHistory history;
  std::vector<NodeId> trajectory;  // nodes visited so far, ends at the current node
  double heading = 0.0;
  int steps_since_question = 0;
  int label = 0;  // 1 = a question was asked here
  friend bool operator==(const QuestionAskingExample&, const QuestionAskingExample&) = default;
};

Tokens target_hint_template(const std::string& object, const std::string& region);
// "where is the O ?", optionally prefixed by the most recently seen tag.
Tokens question_template(const std::string& target_object, const std::string& seen_tag);
// Relative direction word of a bearing seen from a heading.
std::string_view relative_direction(double heading, double bearing);
// Most salient tag in a view: the first region listed, or -1.
int salient_tag(const World& world, NodeId node, int view);

Tokens guide_answer_template(const World& world, const AgentState& s, int goal_region, int l);

CvdnInstance simulate_cvdn_instance(const World& world, const std::string& world_id, std::uint64_t seed,
                                    const GenConfig& cfg);
std::vector<NdhInstance> extract_ndh(const CvdnInstance& instance, SupervisionMode mode);
std::vector<QuestionAskingExample> extract_question_labels(const CvdnInstance& instance);
std::vector<NdhInstance> generate_vln_instances(const World& world, const std::string& world_id, std::uint64_t seed,
                                                const VlnConfig& cfg);

// Checks that every path is edge-connected in its world; throws DataError
// naming the offending instance.
void validate_path(const World& world, const std::string& instance_id, const std::vector<NodeId>& path);

nlohmann::json to_json(const CvdnInstance& x);
nlohmann::json to_json(const NdhInstance& x);
nlohmann::json to_json(const QuestionAskingExample& x);
CvdnInstance cvdn_from_json(const nlohmann::json& j);
NdhInstance ndh_from_json(const nlohmann::json& j);
QuestionAskingExample ask_example_from_json(const nlohmann::json& j);

// Line-delimited records; a malformed line raises ParseError with its number.
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
void read_jsonl(const std::filesystem::path& path, const std::function<void(const nlohmann::json&)>& on_record);

void save_dataset(const std::filesystem::path& path, const std::vector<CvdnInstance>& items);
void save_dataset(const std::filesystem::path& path, const std::vector<NdhInstance>& items);
void save_dataset(const std::filesystem::path& path, const std::vector<QuestionAskingExample>& items);
std::vector<CvdnInstance> load_cvdn_dataset(const std::filesystem::path& path);
std::vector<NdhInstance> load_ndh_dataset(const std::filesystem::path& path);
std::vector<QuestionAskingExample> load_ask_dataset(const std::filesystem::path& path);

}  // namespace dialnav
