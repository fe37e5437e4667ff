#pragma once

// Run configuration and the pipeline stages the CLI strings together:
// worlds -> dialog data -> pretraining -> fine-tuning -> ask head -> evaluation.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dialnav/dialog.hpp"
#include "dialnav/encoder.hpp"
#include "dialnav/gameplay.hpp"
#include "dialnav/navigator.hpp"
#include "dialnav/pretrain.hpp"
#include "dialnav/world.hpp"

namespace dialnav {

enum class GoalKind { subgoal, region };  // supervision terminal node, or the episode's goal region

struct RunConfig {
  std::uint64_t seed = 1;

  WorldConfig world;
  int seen_worlds = 6;
  int unseen_worlds = 3;

  struct Data {
    GenConfig gen;
    int train_dialogs_per_world = 12;
    int val_dialogs_per_world = 4;
    VlnConfig vln;
    int captions = 600;
  } data;

  EncoderConfig encoder;

  struct Pretrain {
    CurriculumFlags flags = CurriculumFlags::row(6);
    PretrainConfig train;
  } pretrain;

  struct Finetune {
    NavigatorConfig navigator;
    ImitationConfig imitation;
    SupervisionMode supervision = SupervisionMode::navigator;
  } finetune;

  AskTrainConfig ask;

  struct Eval {
    GoalKind goal = GoalKind::subgoal;
  } eval;

  struct Gameplay {
    GameConfig game;
    int episodes = 50;
  } gameplay;

  void validate() const;  // throws ConfigError
};

RunConfig default_run_config();
nlohmann::json to_json(const RunConfig& c);
// Unknown keys and ill-typed values are ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& j);
// "a.b.c=value"; value is parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& config, std::string_view assignment);
// FNV-1a over the canonical JSON text, as 16 hex digits.
std::string config_hash(const RunConfig& c);

std::string_view to_string(GoalKind g);
GoalKind goal_kind_from_string(std::string_view s);

// Seen worlds use seeds seed*1000 + i, unseen ones seed*1000 + 500 + i.
enum class Split { seen, unseen };
std::string_view to_string(Split s);
std::string world_id(Split split, int i);
std::uint64_t world_seed(std::uint64_t run_seed, Split split, int i);
WorldSet make_worlds(const RunConfig& c, Split split);

struct Dataset {
  std::vector<CvdnInstance> train_dialogs;
  std::vector<NdhInstance> train_ndh;
  std::vector<NdhInstance> train_vln;
  std::vector<QuestionAskingExample> train_ask;
  std::vector<CvdnInstance> val_seen_dialogs, val_unseen_dialogs;
  std::vector<NdhInstance> val_seen_ndh, val_unseen_ndh;
  std::vector<QuestionAskingExample> val_seen_ask, val_unseen_ask;
};
Dataset make_dataset(const RunConfig& c, const WorldSet& seen, const WorldSet& unseen);

PretrainData make_pretrain_data(const RunConfig& c, const WorldSet& seen, const Dataset& data);

// Navigator over a (pretrained) encoder; object tags follow the pretraining flags.
Navigator build_navigator(const RunConfig& c, Encoder encoder, Vocabulary vocab, bool object_tags);

// Greedy rollouts of every instance, one record per episode plus an aggregate.
nlohmann::json evaluate_navigation(Navigator& nav, const WorldSet& worlds, const std::vector<NdhInstance>& data,
                                   GoalKind goal);
nlohmann::json evaluate_ask(Navigator& nav, const QuestionHead& head, const WorldSet& worlds,
                            const std::vector<QuestionAskingExample>& data);

}  // namespace dialnav
