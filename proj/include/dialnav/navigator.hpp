#pragma once

// LSTM action decoder over the cross-modal encoder, its imitation trainer,
// rollouts, and the ask/navigate head trained on top of a frozen navigator.
//
// Per step the LSTM reads [previous action | pooled panorama | current view |
// pose], attends over the encoder's hidden states and forms
// h~ = tanh(W [h | context | cls]). Viewpoint candidates (STOP plus the
// neighbors) are scored by dot products with h~; turn-based scores come from
// a linear layer over the six motions.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dialnav/dialog.hpp"
#include "dialnav/encoder.hpp"

namespace dialnav {

enum class ActionSpace { viewpoint, turn_based };
std::string_view to_string(ActionSpace s);
ActionSpace action_space_from_string(std::string_view s);

inline constexpr int kAskStepBuckets = 10;  // steps since the last question, capped at 9

struct NavigatorConfig {
  ActionSpace space = ActionSpace::viewpoint;
  int decoder_dim = 128;
  int action_dim = 32;
  bool finetune_encoder = false;
  bool use_object_tags = true;
  int max_steps = 0;        // 0 picks 20 (viewpoint) or 80 (turn-based)
  int cache_entries = 4096; // frozen-encoder outputs kept in memory

  int step_limit() const noexcept { return max_steps > 0 ? max_steps : (space == ActionSpace::viewpoint ? 20 : 80); }
  void validate() const;
};
nlohmann::json to_json(const NavigatorConfig& c);
NavigatorConfig navigator_config_from_json(const nlohmann::json& j);

// What the agent did on its previous step.
struct PrevAction {
  enum Kind { start = 0, forward, left, right, up, down, stop, move };
  Kind kind = start;
  double heading = 0.0;  // direction of a viewpoint move or a FORWARD
  double elevation = 0.0;
  friend bool operator==(const PrevAction&, const PrevAction&) = default;
};
inline constexpr int kPrevActionDim = 12;

struct DecoderState {
  nn::Matrix h;  // 1 x D
  nn::Matrix c;  // 1 x D
  PrevAction prev;
};

struct ActionDistribution {
  ActionSpace space = ActionSpace::viewpoint;
  std::vector<double> probs;
  std::vector<ViewpointChoice> choices;  // viewpoint space: STOP first, then neighbors ascending
  std::vector<TurnAction> actions;       // turn-based space: the six motions in enum order

  std::size_t size() const noexcept { return probs.size(); }
  int argmax() const;
  bool is_stop(int i) const;
  std::string label(int i) const;
};

// Encoder states for one (history, node) pair.
struct EncodedContext {
  nn::Matrix hidden;  // L x H
  nn::Matrix cls;     // 1 x H
};

// One teacher-forced step: the state, what came before, the target candidate.
struct TeacherStep {
  AgentState state;
  PrevAction prev;
  int target = 0;
};
// Minimal rotations followed by FORWARD that carry the agent along an edge.
std::vector<TurnAction> expand_edge(const World& world, const AgentState& s, NodeId next);
std::vector<TeacherStep> teacher_steps(const World& world, const NdhInstance& instance, ActionSpace space);

class Navigator {
 public:
  Navigator(const NavigatorConfig& cfg, Encoder encoder, Vocabulary vocab, std::uint64_t seed);

  const NavigatorConfig& config() const noexcept { return cfg_; }
  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  nn::ParameterStore& decoder_params() noexcept { return params_; }
  const nn::ParameterStore& decoder_params() const noexcept { return params_; }
  // Checksum over encoder and decoder parameters.
  std::uint64_t checksum() const;

  DecoderState initial_state() const;
  EncoderInput encoder_input(const World& world, const DialogHistory& history, NodeId node) const;
  // Runs the encoder (no gradients); results are cached per (world, node, history).
  const EncodedContext& encode(const World& world, const DialogHistory& history, NodeId node);
  void clear_cache() { cache_.clear(); }

  std::pair<ActionDistribution, DecoderState> decode_step(const EncodedContext& ctx, const World& world,
                                                          const AgentState& s, const DecoderState& dec);

  // Graph-level pieces shared by training and the ask head.
  struct StepVars {
    nn::Var h, c;
  };
  struct StepOut {
    nn::Var logits;  // 1 x candidates
    StepVars state;
  };
  StepVars initial_vars(nn::Graph& g) const;
  // Encoder context as graph variables; runs the encoder inside the graph when finetuning.
  std::pair<nn::Var, nn::Var> context_vars(nn::Graph& g, const World& world, const DialogHistory& history, NodeId node);
  StepOut step(nn::Graph& g, nn::Var hidden, nn::Var cls, const World& world, const AgentState& s,
               const PrevAction& prev, StepVars state);

  // Mean teacher-forced cross-entropy over every step of the instances.
  nn::Var imitation_loss(nn::Graph& g, const WorldSet& worlds, const std::vector<const NdhInstance*>& batch);

 private:
  NavigatorConfig cfg_;
  Encoder encoder_;
  Vocabulary vocab_;
  nn::ParameterStore params_;
  std::unordered_map<std::string, EncodedContext> cache_;
};

ActionDistribution candidates_for(const World& world, const AgentState& s, ActionSpace space);

// Takes candidate `pick` (not STOP) of `dist` from state s: the new state and the
// PrevAction the decoder sees next.
std::pair<AgentState, PrevAction> apply_candidate(const World& world, const AgentState& s,
                                                  const ActionDistribution& dist, int pick);

struct ImitationConfig {
  int steps = 300;
  int batch_size = 8;
  double lr = 1e-3;
  double clip_norm = 1.0;
  double vln_weight = 0.0;  // probability a batch slot is drawn from the VLN pool
  void validate() const;
};
nlohmann::json to_json(const ImitationConfig& c);
ImitationConfig imitation_config_from_json(const nlohmann::json& j);

struct TrainLog {
  std::vector<double> loss;
};

// Throws DataError naming an instance whose path leaves its world's graph.
TrainLog train_imitation(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& ndh,
                         const std::vector<NdhInstance>& vln, const ImitationConfig& cfg, std::uint64_t seed);

// Fraction of teacher-forced steps whose argmax is the target.
double teacher_forced_accuracy(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& data);

enum class Decoding { greedy, sample };

struct RolloutStep {
  AgentState state;
  std::string action;
  double probability = 0.0;
};
struct Trajectory {
  std::vector<NodeId> nodes;  // distinct consecutive positions, starting node first
  std::vector<RolloutStep> steps;
  AgentState final_state;
  bool stopped = false;
  bool hit_step_limit = false;
};

Trajectory rollout(Navigator& nav, const World& world, const NdhInstance& instance, int max_steps, Decoding decoding,
                   std::uint64_t seed = 0);

// Two-layer ask/navigate classifier over [cls | decoder h | one-hot steps].
struct QuestionHead {
  nn::ParameterStore params;
  double threshold = 0.5;

  QuestionHead() = default;
  QuestionHead(int input_dim, int hidden, std::uint64_t seed);
  nn::Var logit(nn::Graph& g, nn::Var features);
};

struct AskTrainConfig {
  int hidden = 64;
  int steps = 400;
  int batch_size = 64;
  double lr = 3e-3;
  double val_fraction = 0.25;
  void validate() const;
};
nlohmann::json to_json(const AskTrainConfig& c);
AskTrainConfig ask_train_config_from_json(const nlohmann::json& j);

// Features of an ask example: the decoder is run over the current segment.
nn::Matrix ask_features(Navigator& nav, const World& world, const QuestionAskingExample& ex);
nn::Matrix ask_features(const EncodedContext& ctx, const DecoderState& dec, int steps_since_question);

struct AskDecision {
  double probability = 0.0;
  bool ask = false;
};
AskDecision should_ask(const QuestionHead& head, const nn::Matrix& features);

// Class-weighted BCE over a batch of feature rows.
nn::Var ask_loss(nn::Graph& g, QuestionHead& head, nn::Matrix features, std::span<const double> labels,
                 std::span<const double> weights);

struct AskTrainResult {
  QuestionHead head;
  double val_balanced_accuracy = 0.0;
  std::vector<double> loss;
};
// Trains with the navigator frozen; the validation split is drawn by instance.
// Throws DataError when the training labels contain a single class.
AskTrainResult train_question_head(Navigator& nav, const WorldSet& worlds,
                                   const std::vector<QuestionAskingExample>& examples, const AskTrainConfig& cfg,
                                   std::uint64_t seed);

// Checkpoint with kind "navigator"; the question head is optional.
void save_navigator(const std::filesystem::path& path, const Navigator& nav, const QuestionHead* head = nullptr,
                    const nlohmann::json& extra = nlohmann::json::object());
struct LoadedNavigator {
  std::unique_ptr<Navigator> navigator;
  std::optional<QuestionHead> head;
  nlohmann::json meta;
};
LoadedNavigator load_navigator(const std::filesystem::path& path);

}  // namespace dialnav
