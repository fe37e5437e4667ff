#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dialnav/dialog.hpp"
#include "dialnav/errors.hpp"
#include "support/worlds.hpp"

namespace dialnav {
namespace {

const World& shared_world() {
  static const World w = generate_world(31, WorldConfig{});
  return w;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::vector<NodeId> full_trajectory(const CvdnInstance& inst) {
  std::vector<NodeId> traj{inst.start};
  for (const auto& t : inst.turns) traj.insert(traj.end(), t.segment.begin(), t.segment.end());
  return traj;
}

TEST(SimulateCvdn, SatisfiesInstanceInvariants) {
  const World& w = shared_world();
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    CvdnInstance inst = simulate_cvdn_instance(w, "w", seed, GenConfig{});
    ASSERT_FALSE(inst.turns.empty());
    EXPECT_TRUE(inst.turns[0].qa.question.empty());
    EXPECT_EQ(inst.turns[0].start, inst.start);
    EXPECT_TRUE(w.in_region(inst.terminal(), inst.goal_region));
    EXPECT_FALSE(w.in_region(inst.start, inst.goal_region));
    NodeId at = inst.start;
    for (int t = 0; t <= inst.m(); ++t) {
      const auto& turn = inst.turns[t];
      EXPECT_EQ(turn.start, at);
      EXPECT_GE(turn.segment.size(), 1u);
      if (t > 0) {
        EXPECT_FALSE(turn.qa.question.empty());
        EXPECT_FALSE(turn.qa.answer.empty());
      }
      for (NodeId n : turn.segment) {
        EXPECT_TRUE(w.adjacent(at, n));
        at = n;
      }
    }
  }
}

TEST(SimulateCvdn, NoDetourFollowsOraclePath) {
  const World& w = shared_world();
  GenConfig cfg;
  cfg.detour_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CvdnInstance inst = simulate_cvdn_instance(w, "w", seed, cfg);
    auto oracle = shortest_path(w, inst.start, nearest_region_node(w, inst.start, inst.goal_region));
    EXPECT_EQ(full_trajectory(inst), oracle);
  }
}

TEST(SimulateCvdn, DeterministicPerSeed) {
  const World& w = shared_world();
  EXPECT_EQ(simulate_cvdn_instance(w, "w", 5, GenConfig{}), simulate_cvdn_instance(w, "w", 5, GenConfig{}));
  EXPECT_NE(to_json(simulate_cvdn_instance(w, "w", 5, GenConfig{})).dump(),
            to_json(simulate_cvdn_instance(w, "w", 6, GenConfig{})).dump());
}

TEST(SimulateCvdn, AnswersNameObjectsAlongOraclePath) {
  const World& w = shared_world();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CvdnInstance inst = simulate_cvdn_instance(w, "w", seed, GenConfig{});
    for (int t = 1; t <= inst.m(); ++t) {
      const auto& turn = inst.turns[t];
      // Every object word in the answer is visible from the oracle path
      // toward its next step.
      std::set<std::string> visible;
      for (std::size_t i = 0; i + 1 < turn.oracle_path.size(); ++i)
        for (int v = 0; v < kNumViews; ++v)
          for (int tag : w.objects_in_view(turn.oracle_path[i], v))
            if (v == next_node_direction(w, AgentState{turn.oracle_path[i], 0, 0}, turn.oracle_path[i + 1]).view_index)
              visible.insert(w.object_vocab[tag]);
      const std::set<std::string> vocab(w.object_vocab.begin(), w.object_vocab.end());
      int named = 0;
      for (const auto& tok : turn.qa.answer)
        if (vocab.count(tok)) {
          EXPECT_TRUE(visible.count(tok)) << tok;
          ++named;
        }
      EXPECT_GE(named, 1);
    }
  }
}

TEST(GuideAnswer, StopInsideGoalRegion) {
  World w = testing::corridor(4);  // node 3 is the goal region
  auto a = guide_answer_template(w, AgentState{3, 0, 0}, w.goal_region, 5);
  EXPECT_NE(std::find(a.begin(), a.end(), "stop"), a.end());
}

TEST(GuideAnswer, SingleStepNamesFirstDirection) {
  const World& w = shared_world();
  const std::set<std::string> dirs{"ahead", "behind", "left", "right"};
  for (NodeId n = 0; n < w.num_nodes(); ++n) {
    if (w.in_region(n, w.goal_region)) continue;
    for (double heading : {0.0, 1.0, 2.5, 4.0}) {
      AgentState s{n, heading, 0};
      auto a = guide_answer_template(w, s, w.goal_region, 1);
      std::vector<std::string> mentioned;
      for (const auto& t : a)
        if (dirs.count(t)) mentioned.push_back(t);
      ASSERT_EQ(mentioned.size(), 1u);
      const NodeId first = shortest_path(w, n, nearest_region_node(w, n, w.goal_region))[1];
      const double rel = angle_diff(next_node_direction(w, s, first).heading, heading);
      const double deg = rel * 180 / std::numbers::pi;
      const std::string want = std::abs(deg) <= 45 ? "ahead" : std::abs(deg) > 135 ? "behind" : deg > 0 ? "right" : "left";
      EXPECT_EQ(mentioned[0], want);
      EXPECT_EQ(a, guide_answer_template(w, s, w.goal_region, 1));
    }
  }
}

TEST(GuideAnswer, RejectsZeroLookahead) {
  EXPECT_THROW(guide_answer_template(shared_world(), AgentState{0, 0, 0}, 0, 0), std::invalid_argument);
}

// A constructed instance on a corridor: N_t and O_t are chosen directly.
CvdnInstance constructed(std::vector<NodeId> segment, std::vector<NodeId> oracle) {
  CvdnInstance inst;
  inst.id = "c";
  inst.world_id = "corridor";
  inst.target_hint = {"find", "the", "oven", "in", "the", "kitchen"};
  inst.start = 0;
  DialogTurn t0;
  t0.start = 0;
  t0.oracle_path = {0, 1};
  t0.segment = {1};
  DialogTurn t1;
  t1.qa = {{"where", "is", "the", "oven", "?"}, {"go", "ahead"}};
  t1.start = 1;
  t1.oracle_path = std::move(oracle);
  t1.segment = std::move(segment);
  inst.turns = {t0, t1};
  return inst;
}

TEST(ExtractNdh, ModesAgreeWhenPathsCoincide) {
  auto inst = constructed({2, 3}, {1, 2, 3});
  auto nav = extract_ndh(inst, SupervisionMode::navigator);
  auto ora = extract_ndh(inst, SupervisionMode::oracle);
  auto mix = extract_ndh(inst, SupervisionMode::mixed);
  ASSERT_EQ(nav.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(nav[t].path, ora[t].path);
    EXPECT_EQ(nav[t].path, mix[t].path);
  }
  EXPECT_EQ(nav[1].start, 1);
  EXPECT_EQ(nav[1].history.exchanges.size(), 1u);
  EXPECT_EQ(nav[0].history.exchanges.size(), 0u);
}

TEST(ExtractNdh, MixedRuleByConstruction) {
  // e(O) = 3 lies on N = [1, 2, 3, 2]: mixed keeps N.
  auto on = extract_ndh(constructed({2, 3, 2}, {1, 2, 3}), SupervisionMode::mixed);
  EXPECT_EQ(on[1].path, (std::vector<NodeId>{1, 2, 3, 2}));
  // e(O) = 3 is absent from N = [1, 0]: mixed falls back to O.
  auto off = extract_ndh(constructed({0}, {1, 2, 3}), SupervisionMode::mixed);
  EXPECT_EQ(off[1].path, (std::vector<NodeId>{1, 2, 3}));
}

TEST(ExtractNdh, StartsChainAndOraclePrefixes) {
  const World& w = shared_world();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = simulate_cvdn_instance(w, "w", seed, GenConfig{});
    auto ndh = extract_ndh(inst, SupervisionMode::oracle);
    ASSERT_EQ(static_cast<int>(ndh.size()), inst.m() + 1);
    for (int t = 0; t <= inst.m(); ++t) {
      const NodeId expected_start = t == 0 ? inst.start : (inst.turns[t - 1].segment.back());
      EXPECT_EQ(ndh[t].start, expected_start);
      EXPECT_EQ(ndh[t].path.front(), ndh[t].start);
      EXPECT_LE(ndh[t].path.size(), 6u);
      auto full = shortest_path(w, ndh[t].start, nearest_region_node(w, ndh[t].start, inst.goal_region));
      ASSERT_LE(ndh[t].path.size(), full.size());
      EXPECT_TRUE(std::equal(ndh[t].path.begin(), ndh[t].path.end(), full.begin()));
    }
  }
}

TEST(QuestionLabels, NoExchangesMeansAllNegative) {
  CvdnInstance inst = constructed({2, 3}, {1, 2, 3});
  inst.turns.pop_back();
  auto ex = extract_question_labels(inst);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].label, 0);
}

TEST(QuestionLabels, HandUnrolledTwoExchangeEpisode) {
  // N0 = [1], Q1, N1 = [2, 3], Q2, N2 = [4]
  CvdnInstance inst = constructed({2, 3}, {1, 2, 3});
  DialogTurn t2;
  t2.qa = {{"where", "is", "the", "oven", "?"}, {"go", "ahead"}};
  t2.start = 3;
  t2.oracle_path = {3, 4};
  t2.segment = {4};
  inst.turns.push_back(t2);
  auto ex = extract_question_labels(inst);
  const std::vector<int> labels{0, 1, 0, 0, 1, 0};
  const std::vector<int> steps{0, 1, 0, 1, 2, 0};
  const std::vector<NodeId> at{0, 1, 1, 2, 3, 3};
  ASSERT_EQ(ex.size(), labels.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(ex[i].label, labels[i]) << i;
    EXPECT_EQ(ex[i].steps_since_question, steps[i]) << i;
    EXPECT_EQ(ex[i].trajectory.back(), at[i]) << i;
  }
  EXPECT_EQ(ex[1].history.exchanges.size(), 0u);
  EXPECT_EQ(ex[2].history.exchanges.size(), 1u);
  EXPECT_EQ(ex[4].history.exchanges.size(), 1u);
  EXPECT_EQ(ex[5].history.exchanges.size(), 2u);
}

TEST(QuestionLabels, PositivesEqualExchangeCount) {
  const World& w = shared_world();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = simulate_cvdn_instance(w, "w", seed, GenConfig{});
    auto ex = extract_question_labels(inst);
    int pos = 0;
    for (const auto& e : ex) pos += e.label;
    EXPECT_EQ(pos, inst.m());
    EXPECT_EQ(static_cast<int>(ex.size()) - pos, static_cast<int>(full_trajectory(inst).size()) - 1);
  }
}

TEST(VlnInstances, LongRangeIsLongerAndInstructionOnly) {
  const World& w = shared_world();
  VlnConfig short_cfg{2, 4, 100}, long_cfg{6, 10, 100};
  auto mean_len = [](const std::vector<NdhInstance>& xs) {
    double s = 0;
    for (const auto& x : xs) s += static_cast<double>(x.path.size() - 1);
    return s / static_cast<double>(xs.size());
  };
  auto s = generate_vln_instances(w, "w", 3, short_cfg);
  auto l = generate_vln_instances(w, "w", 3, long_cfg);
  EXPECT_GT(mean_len(l), mean_len(s));
  for (const auto& x : s) {
    EXPECT_TRUE(x.history.exchanges.empty());
    EXPECT_EQ(x.source, "vln");
    EXPECT_NO_THROW(validate_path(w, x.id, x.path));
  }
  EXPECT_EQ(generate_vln_instances(w, "w", 3, short_cfg), s);
}

TEST(ValidatePath, NamesOffendingInstance) {
  World w = testing::corridor(4);
  try {
    validate_path(w, "bad-7", {0, 2});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-7"), std::string::npos);
  }
}

TEST(Dataset, RoundTripsEveryRecordType) {
  const World& w = shared_world();
  std::vector<CvdnInstance> cvdn;
  for (std::uint64_t s = 0; s < 5; ++s) cvdn.push_back(simulate_cvdn_instance(w, "w", s, GenConfig{}));
  std::vector<NdhInstance> ndh;
  std::vector<QuestionAskingExample> ask;
  for (const auto& c : cvdn) {
    for (auto& x : extract_ndh(c, SupervisionMode::mixed)) ndh.push_back(x);
    for (auto& x : extract_question_labels(c)) ask.push_back(x);
  }
  const auto p = temp_file("dialnav_dataset_test.jsonl");
  save_dataset(p, cvdn);
  EXPECT_EQ(load_cvdn_dataset(p), cvdn);
  save_dataset(p, ndh);
  EXPECT_EQ(load_ndh_dataset(p), ndh);
  save_dataset(p, ask);
  EXPECT_EQ(load_ask_dataset(p), ask);
  std::filesystem::remove(p);
}

TEST(Dataset, EmptyFileIsEmptyDataset) {
  const auto p = temp_file("dialnav_dataset_empty.jsonl");
  std::ofstream(p).close();
  EXPECT_TRUE(load_ndh_dataset(p).empty());
  std::filesystem::remove(p);
  EXPECT_THROW(load_ndh_dataset(p), DataError);
}

TEST(Dataset, TruncatedLineReportsLineNumber) {
  const auto p = temp_file("dialnav_dataset_trunc.jsonl");
  std::vector<NdhInstance> ndh = extract_ndh(simulate_cvdn_instance(shared_world(), "w", 1, GenConfig{}),
                                             SupervisionMode::navigator);
  ASSERT_GE(ndh.size(), 1u);
  save_dataset(p, ndh);
  std::string text;
  {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  text.resize(text.size() - 10);
  {
    std::ofstream os(p, std::ios::trunc);
    os << text;
  }
  try {
    load_ndh_dataset(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), ndh.size());
  }
  std::filesystem::remove(p);
}

}  // namespace
}  // namespace dialnav
