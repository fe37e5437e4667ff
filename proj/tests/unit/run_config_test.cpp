#include <gtest/gtest.h>

#include "dialnav/errors.hpp"
#include "dialnav/run.hpp"

namespace dialnav {
namespace {

using nlohmann::json;

TEST(RunConfig, DefaultsRoundTrip) {
  const RunConfig c = default_run_config();
  const json j = to_json(c);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
  EXPECT_EQ(config_hash(run_config_from_json(j)), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(RunConfig, PartialFilesMergeOverDefaults) {
  const RunConfig c = run_config_from_json({{"seen_worlds", 2}, {"finetune", {{"imitation", {{"steps", 7}}}}}});
  EXPECT_EQ(c.seen_worlds, 2);
  EXPECT_EQ(c.finetune.imitation.steps, 7);
  EXPECT_EQ(c.unseen_worlds, default_run_config().unseen_worlds);
  EXPECT_NE(config_hash(c), config_hash(default_run_config()));
}

TEST(RunConfig, UnknownAndIllTypedKeysAreRejected) {
  EXPECT_THROW(run_config_from_json({{"seen_world", 2}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"encoder", {{"hiden", 8}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"seen_worlds", "two"}}), ConfigError);
  EXPECT_THROW(run_config_from_json({{"world", 3}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json::array()), ConfigError);
}

TEST(RunConfig, ValidationCatchesMismatchedFeatureWidths) {
  RunConfig c = default_run_config();
  c.encoder.feature_dim = c.world.feature_dim + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_run_config();
  c.unseen_worlds = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ApplyOverride, ParsesJsonWithStringFallback) {
  json j = json::object();
  apply_override(j, "finetune.imitation.steps=12");
  apply_override(j, "finetune.navigator.space=turn-based");
  apply_override(j, "pretrain.flags={\"stage1_contrastive_mlm\": true}");
  EXPECT_EQ(j["finetune"]["imitation"]["steps"], 12);
  EXPECT_EQ(j["finetune"]["navigator"]["space"], "turn-based");
  const RunConfig c = run_config_from_json(j);
  EXPECT_EQ(c.finetune.navigator.space, ActionSpace::turn_based);
  EXPECT_TRUE(c.pretrain.flags.stage1_contrastive_mlm);
  EXPECT_FALSE(c.pretrain.flags.stage1_object_tags);
  EXPECT_THROW(apply_override(j, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(j, "a..b=1"), ConfigError);
  EXPECT_THROW(apply_override(j, "finetune.imitation.steps.x=1"), ConfigError);
}

TEST(Worlds, SeedsAndIdsPerSplit) {
  EXPECT_EQ(world_id(Split::seen, 3), "seen-003");
  EXPECT_EQ(world_id(Split::unseen, 0), "unseen-000");
  EXPECT_EQ(world_seed(2, Split::seen, 4), 2004u);
  EXPECT_EQ(world_seed(2, Split::unseen, 4), 2504u);
}

}  // namespace
}  // namespace dialnav
