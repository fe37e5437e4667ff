#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <queue>

#include "dialnav/errors.hpp"
#include "dialnav/metrics.hpp"
#include "dialnav/navigator.hpp"
#include "support/finite_diff.hpp"
#include "support/toy.hpp"
#include "support/worlds.hpp"

namespace dialnav {
namespace {

using nn::Graph;

NavigatorConfig toy_nav(ActionSpace space) {
  NavigatorConfig c;
  c.space = space;
  c.decoder_dim = 24;
  c.action_dim = 8;
  return c;
}

Navigator make_nav(ActionSpace space, std::uint64_t seed = 3) {
  const auto vocab = Vocabulary::standard();
  return Navigator(toy_nav(space), Encoder(testing::toy_encoder_config(), vocab.size(), 1), vocab, seed);
}

struct Data {
  WorldSet worlds = testing::toy_worlds(2, 21);
  std::vector<NdhInstance> ndh = testing::toy_ndh(worlds, 4, 5);
};

const Data& data() {
  static const Data d;
  return d;
}

std::vector<NdhInstance> first(const std::vector<NdhInstance>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

// Fewest single rotations after which FORWARD reaches `next`, by breadth-first search over headings.
int min_rotations(const World& w, const AgentState& s, NodeId next) {
  std::map<long, int> seen;
  std::queue<std::pair<AgentState, int>> q;
  q.push({s, 0});
  auto key = [](const AgentState& a) { return std::lround(a.heading * 1e6); };
  seen[key(s)] = 0;
  while (!q.empty()) {
    auto [a, d] = q.front();
    q.pop();
    if (step_turn_based(w, a, TurnAction::forward).node == next) return d;
    for (TurnAction t : {TurnAction::left, TurnAction::right}) {
      AgentState b = step_turn_based(w, a, t);
      if (seen.emplace(key(b), d + 1).second) q.push({b, d + 1});
    }
  }
  return -1;
}

TEST(Candidates, ViewpointAndTurnBasedShapes) {
  World w = testing::make_world({{0, 0, 0}, {0, 2, 0}, {2, 0, 0}, {-2, 0, 0}}, {{0, 1}, {0, 2}, {0, 3}});
  AgentState s{0, 0.0, 0.0};
  auto vp = candidates_for(w, s, ActionSpace::viewpoint);
  ASSERT_EQ(vp.size(), 4u);
  EXPECT_TRUE(vp.choices[0].is_stop());
  EXPECT_EQ(*vp.choices[1].node, 1);
  EXPECT_EQ(candidates_for(w, s, ActionSpace::turn_based).size(), 6u);
  EXPECT_EQ(candidates_for(w, AgentState{1, 0, 0}, ActionSpace::viewpoint).size(), 2u);
}

TEST(DecodeStep, ProbabilitiesNormalize) {
  const auto& d = data();
  for (auto space : {ActionSpace::viewpoint, ActionSpace::turn_based}) {
    Navigator nav = make_nav(space);
    const auto& inst = d.ndh.front();
    const World& w = world_for(d.worlds, inst.world_id);
    AgentState s{inst.start, inst.start_heading, 0.0};
    auto [dist, next] = nav.decode_step(nav.encode(w, inst.history, s.node), w, s, nav.initial_state());
    double sum = 0.0;
    for (double p : dist.probs) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_EQ(dist.size(), space == ActionSpace::turn_based ? 6u : 1 + w.adjacency[s.node].size());
    EXPECT_EQ(next.h.cols(), 24);
  }
}

TEST(ExpandEdge, MinimalRotationsThenForward) {
  World w = generate_world(4, WorldConfig{});
  for (NodeId u = 0; u < w.num_nodes(); ++u)
    for (NodeId v : w.adjacency[u])
      for (int h = 0; h < kHeadingBins; h += 5) {
        AgentState s{u, h * kRotationStep, 0.0};
        auto acts = expand_edge(w, s, v);
        EXPECT_EQ(static_cast<int>(acts.size()) - 1, min_rotations(w, s, v));
        for (auto a : acts) s = step_turn_based(w, s, a);
        EXPECT_EQ(s.node, v);
        EXPECT_EQ(acts.back(), TurnAction::forward);
      }
}

TEST(TeacherSteps, TargetsFollowThePath) {
  const auto& d = data();
  for (const auto& inst : d.ndh) {
    const World& w = world_for(d.worlds, inst.world_id);
    auto vp = teacher_steps(w, inst, ActionSpace::viewpoint);
    ASSERT_EQ(vp.size(), inst.path.size());
    for (std::size_t i = 0; i + 1 < vp.size(); ++i) {
      auto c = candidates_for(w, vp[i].state, ActionSpace::viewpoint);
      EXPECT_EQ(*c.choices[static_cast<std::size_t>(vp[i].target)].node, inst.path[i + 1]);
    }
    EXPECT_EQ(vp.back().target, 0);
    auto tb = teacher_steps(w, inst, ActionSpace::turn_based);
    AgentState s{inst.start, inst.start_heading, 0.0};
    for (std::size_t i = 0; i + 1 < tb.size(); ++i) {
      EXPECT_EQ(tb[i].state, s);
      s = step_turn_based(w, s, static_cast<TurnAction>(tb[i].target));
    }
    EXPECT_EQ(s.node, inst.path.back());
    EXPECT_EQ(tb.back().target, static_cast<int>(TurnAction::stop));
  }
}

void check_imitation_gradients(ActionSpace space) {
  const auto& d = data();
  auto cfg = toy_nav(space);
  cfg.finetune_encoder = true;
  const auto vocab = Vocabulary::standard();
  Navigator nav(cfg, Encoder(testing::toy_encoder_config(), vocab.size(), 1), vocab, 3);
  testing::scramble(nav.encoder().params(), 0.3, 4);
  testing::scramble(nav.decoder_params(), 0.3, 5);
  std::vector<const NdhInstance*> batch{&d.ndh[0], &d.ndh[1]};
  {
    Graph g;
    g.backward(nav.imitation_loss(g, d.worlds, batch));
  }
  auto value = [&] {
    Graph g;
    return g.scalar(nav.imitation_loss(g, d.worlds, batch));
  };
  for (auto* store : {&nav.decoder_params(), &nav.encoder().params()}) {
    auto r = testing::check_gradients(*store, value, 3);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
  }
}

TEST(Imitation, ViewpointGradientsMatchFiniteDifferences) { check_imitation_gradients(ActionSpace::viewpoint); }
TEST(Imitation, TurnBasedGradientsMatchFiniteDifferences) { check_imitation_gradients(ActionSpace::turn_based); }

TEST(Imitation, FrozenEncoderLossMatchesFinetunePath) {
  const auto& d = data();
  Navigator frozen = make_nav(ActionSpace::viewpoint);
  auto cfg = toy_nav(ActionSpace::viewpoint);
  cfg.finetune_encoder = true;
  const auto vocab = Vocabulary::standard();
  Navigator tuned(cfg, Encoder(testing::toy_encoder_config(), vocab.size(), 1), vocab, 3);
  std::vector<const NdhInstance*> batch{&d.ndh[0]};
  Graph a, b;
  EXPECT_NEAR(a.scalar(frozen.imitation_loss(a, d.worlds, batch)), b.scalar(tuned.imitation_loss(b, d.worlds, batch)),
              1e-12);
}

TEST(Imitation, OverfitsEightInstancesAndReplaysThem) {
  const auto& d = data();
  const auto eight = first(d.ndh, 8);
  ASSERT_EQ(eight.size(), 8u);
  Navigator nav = make_nav(ActionSpace::viewpoint);
  ImitationConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 8;
  train_imitation(nav, d.worlds, eight, {}, cfg, 1);
  EXPECT_GE(teacher_forced_accuracy(nav, d.worlds, eight), 0.99);
  for (const auto& inst : eight) {
    auto tr = rollout(nav, world_for(d.worlds, inst.world_id), inst, 20, Decoding::greedy);
    EXPECT_TRUE(tr.stopped);
    EXPECT_EQ(tr.nodes, inst.path) << inst.id;
  }
}

TEST(Imitation, ZeroMixingWeightIgnoresVln) {
  const auto& d = data();
  auto vln = generate_vln_instances(d.worlds.begin()->second, d.worlds.begin()->first, 3, VlnConfig{});
  ImitationConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  Navigator a = make_nav(ActionSpace::viewpoint), b = make_nav(ActionSpace::viewpoint);
  train_imitation(a, d.worlds, d.ndh, {}, cfg, 9);
  train_imitation(b, d.worlds, d.ndh, vln, cfg, 9);
  EXPECT_EQ(a.checksum(), b.checksum());
  cfg.vln_weight = 0.5;
  Navigator c = make_nav(ActionSpace::viewpoint);
  train_imitation(c, d.worlds, d.ndh, vln, cfg, 9);
  EXPECT_NE(a.checksum(), c.checksum());
}

TEST(Imitation, SameSeedSameCheckpoint) {
  const auto& d = data();
  ImitationConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 3;
  Navigator a = make_nav(ActionSpace::turn_based), b = make_nav(ActionSpace::turn_based);
  auto la = train_imitation(a, d.worlds, d.ndh, {}, cfg, 2);
  auto lb = train_imitation(b, d.worlds, d.ndh, {}, cfg, 2);
  EXPECT_EQ(a.checksum(), b.checksum());
  EXPECT_EQ(la.loss, lb.loss);
}

TEST(Imitation, BrokenPathIsADataErrorNamingTheInstance) {
  const auto& d = data();
  auto bad = d.ndh;
  const World& w = world_for(d.worlds, bad[0].world_id);
  NodeId far = 0;
  while (far == bad[0].start || w.adjacent(bad[0].start, far)) ++far;
  bad[0].path = {bad[0].start, far};
  Navigator nav = make_nav(ActionSpace::viewpoint);
  try {
    train_imitation(nav, d.worlds, bad, {}, ImitationConfig{}, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(bad[0].id), std::string::npos);
  }
}

TEST(Rollout, GreedyIsDeterministicAndConnected) {
  const auto& d = data();
  for (auto space : {ActionSpace::viewpoint, ActionSpace::turn_based}) {
    Navigator nav = make_nav(space, 8);
    for (const auto& inst : first(d.ndh, 4)) {
      const World& w = world_for(d.worlds, inst.world_id);
      const int limit = toy_nav(space).step_limit();
      auto a = rollout(nav, w, inst, limit, Decoding::greedy);
      auto b = rollout(nav, w, inst, limit, Decoding::greedy);
      EXPECT_EQ(a.nodes, b.nodes);
      EXPECT_EQ(a.steps.size(), b.steps.size());
      EXPECT_LE(static_cast<int>(a.steps.size()), limit);
      EXPECT_EQ(a.hit_step_limit, !a.stopped);
      for (std::size_t i = 0; i + 1 < a.nodes.size(); ++i) EXPECT_TRUE(w.adjacent(a.nodes[i], a.nodes[i + 1]));
      for (NodeId n : a.nodes) EXPECT_TRUE(w.has_node(n));
      auto s1 = rollout(nav, w, inst, limit, Decoding::sample, 4);
      auto s2 = rollout(nav, w, inst, limit, Decoding::sample, 4);
      EXPECT_EQ(s1.nodes, s2.nodes);
    }
  }
}

TEST(Rollout, StepLimitIsRecorded) {
  const auto& d = data();
  Navigator nav = make_nav(ActionSpace::turn_based, 8);
  const auto& inst = d.ndh.front();
  auto tr = rollout(nav, world_for(d.worlds, inst.world_id), inst, 1, Decoding::greedy);
  EXPECT_EQ(tr.steps.size(), 1u);
  EXPECT_EQ(tr.hit_step_limit, !tr.stopped);
  EXPECT_THROW(rollout(nav, world_for(d.worlds, inst.world_id), inst, 0, Decoding::greedy), std::invalid_argument);
}

// Dialogs where the navigator always walks exactly three steps between questions.
struct AskData {
  WorldSet worlds;
  std::vector<QuestionAskingExample> train, test;
};

AskData every_third_step() {
  AskData a;
  WorldConfig wc = testing::toy_world_config();
  wc.num_nodes = 40;
  wc.num_regions = 6;
  GenConfig g;
  g.question_period_min = 3;
  g.question_period_max = 3;
  g.detour_prob = 0.0;
  g.min_start_hops = 6;
  for (int i = 0; i < 6; ++i) {
    const std::string id = "w" + std::to_string(i);
    a.worlds.emplace(id, generate_world(100 + i, wc));
    for (int k = 0; k < 4; ++k) {
      auto inst = simulate_cvdn_instance(a.worlds.at(id), id, 31 * i + k, g);
      for (auto& ex : extract_question_labels(inst)) (i < 4 ? a.train : a.test).push_back(std::move(ex));
    }
  }
  return a;
}

TEST(QuestionHead, LearnsTheEveryThirdStepPattern) {
  const auto ask = every_third_step();
  int positives = 0;
  for (const auto& ex : ask.train) {
    positives += ex.label;
    if (ex.label == 1) EXPECT_EQ(ex.steps_since_question, 3);
  }
  ASSERT_GT(positives, 0);
  Navigator nav = make_nav(ActionSpace::viewpoint);
  const auto before = nav.checksum();
  auto r = train_question_head(nav, ask.worlds, ask.train, AskTrainConfig{}, 5);
  EXPECT_EQ(nav.checksum(), before);

  std::vector<int> preds, labels;
  for (const auto& ex : ask.test) {
    const auto f = ask_features(nav, world_for(ask.worlds, ex.world_id), ex);
    const auto d1 = should_ask(r.head, f);
    const auto d2 = should_ask(r.head, f);
    EXPECT_EQ(d1.probability, d2.probability);
    EXPECT_EQ(d1.ask, d1.probability >= r.head.threshold);
    preds.push_back(d1.ask);
    labels.push_back(ex.label);
  }
  const auto rep = classification_report(preds, labels);
  ASSERT_TRUE(rep.balanced_accuracy.has_value());
  EXPECT_GE(*rep.balanced_accuracy, 0.9);
  EXPECT_EQ(nav.checksum(), before);
}

TEST(QuestionHead, SingleClassLabelsAreRejected) {
  auto ask = every_third_step();
  std::vector<QuestionAskingExample> negatives;
  for (const auto& ex : ask.train)
    if (ex.label == 0) negatives.push_back(ex);
  Navigator nav = make_nav(ActionSpace::viewpoint);
  EXPECT_THROW(train_question_head(nav, ask.worlds, negatives, AskTrainConfig{}, 1), DataError);
}

TEST(QuestionHead, ThresholdExtremes) {
  QuestionHead head(10, 4, 1);
  nn::Matrix f(1, 10);
  for (int i = 0; i < 10; ++i) f(0, i) = std::sin(i);
  head.threshold = 0.0;
  EXPECT_TRUE(should_ask(head, f).ask);
  head.threshold = 1.0 + 1e-9;
  EXPECT_FALSE(should_ask(head, f).ask);
}

TEST(QuestionHead, WeightedBceGradientsMatchFiniteDifferences) {
  QuestionHead head(12, 6, 2);
  testing::scramble(head.params, 0.5, 3);
  nn::Matrix x(5, 12);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 12; ++c) x(r, c) = std::cos(1.3 * r + 0.7 * c);
  const std::vector<double> y{1, 0, 0, 1, 0}, w{1.25, 0.8333, 0.8333, 1.25, 0.8333};
  head.params.zero_grad();
  {
    Graph g;
    g.backward(ask_loss(g, head, x, y, w));
  }
  auto value = [&] {
    Graph g(false);
    return g.scalar(ask_loss(g, head, x, y, w));
  };
  auto r = testing::check_gradients(head.params, value, 8);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Checkpoint, NavigatorRoundTripWithHead) {
  const auto& d = data();
  Navigator nav = make_nav(ActionSpace::turn_based, 12);
  QuestionHead head(16 + 24 + kAskStepBuckets, 8, 2);
  head.threshold = 0.37;
  const auto path = std::filesystem::temp_directory_path() / "dialnav_nav_ckpt.bin";
  save_navigator(path, nav, &head, {{"note", "x"}});
  auto loaded = load_navigator(path);
  EXPECT_EQ(loaded.navigator->checksum(), nav.checksum());
  EXPECT_EQ(loaded.navigator->config().space, ActionSpace::turn_based);
  ASSERT_TRUE(loaded.head.has_value());
  EXPECT_EQ(loaded.head->threshold, 0.37);
  EXPECT_TRUE(loaded.head->params == head.params);
  EXPECT_EQ(loaded.meta.at("note"), "x");
  const auto& inst = d.ndh.front();
  const World& w = world_for(d.worlds, inst.world_id);
  EXPECT_EQ(rollout(nav, w, inst, 10, Decoding::greedy).nodes,
            rollout(*loaded.navigator, w, inst, 10, Decoding::greedy).nodes);
  save_navigator(path, nav);
  EXPECT_FALSE(load_navigator(path).head.has_value());
  std::filesystem::remove(path);
  EXPECT_THROW(load_navigator(path), DataError);
}

}  // namespace
}  // namespace dialnav
