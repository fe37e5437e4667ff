#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "dialnav/errors.hpp"
#include "dialnav/world.hpp"
#include "support/worlds.hpp"

namespace dialnav {
namespace {

constexpr double kPi = std::numbers::pi;

// Enumerates every simple path and keeps the shortest, breaking near-ties by
// lexicographic node order.
std::vector<NodeId> brute_force_path(const World& w, NodeId from, NodeId to) {
  std::vector<NodeId> best;
  double best_len = std::numeric_limits<double>::infinity();
  std::vector<NodeId> cur{from};
  std::vector<bool> used(static_cast<std::size_t>(w.num_nodes()), false);
  used[from] = true;
  std::function<void(double)> dfs = [&](double len) {
    const NodeId u = cur.back();
    if (u == to) {
      if (len < best_len - 1e-9 || (std::abs(len - best_len) <= 1e-9 && cur < best)) {
        best_len = std::min(best_len, len);
        best = cur;
      }
      return;
    }
    for (NodeId v : w.adjacency[u]) {
      if (used[v]) continue;
      used[v] = true;
      cur.push_back(v);
      dfs(len + w.distance(u, v));
      cur.pop_back();
      used[v] = false;
    }
  };
  dfs(0.0);
  return best;
}

// Bin by nearest view centre, computed independently of view_index_for.
int brute_force_bin(double heading, double elevation) {
  int best_h = 0;
  double best = 10.0;
  for (int k = 0; k < kHeadingBins; ++k) {
    double d = std::fmod(std::abs(heading - k * kPi / 6), 2 * kPi);
    d = std::min(d, 2 * kPi - d);
    if (d < best) {
      best = d;
      best_h = k;
    }
  }
  int best_e = 0;
  double best_ed = 10.0;
  for (int e = 0; e < 3; ++e) {
    const double d = std::abs(elevation - (e - 1) * kPi / 6);
    if (d < best_ed) {
      best_ed = d;
      best_e = e;
    }
  }
  return best_e * 12 + best_h;
}

bool connected(const World& w) {
  std::vector<bool> seen(static_cast<std::size_t>(w.num_nodes()), false);
  std::vector<NodeId> stack{0};
  seen[0] = true;
  int count = 1;
  while (!stack.empty()) {
    NodeId u = stack.back();
    stack.pop_back();
    for (NodeId v : w.adjacency[u])
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        stack.push_back(v);
      }
  }
  return count == w.num_nodes();
}

TEST(GenerateWorld, SatisfiesInvariants) {
  for (std::uint64_t seed : {1u, 7u, 8u, 123u}) {
    World w = generate_world(seed, WorldConfig{});
    ASSERT_EQ(w.num_nodes(), 40);
    EXPECT_TRUE(connected(w)) << "seed " << seed;
    for (NodeId u = 0; u < w.num_nodes(); ++u) {
      EXPECT_GE(w.adjacency[u].size(), 1u);
      for (NodeId v : w.adjacency[u]) {
        EXPECT_GT(w.distance(u, v), 0.0);
        EXPECT_LE(w.distance(u, v), w.config.max_edge_len);
        EXPECT_TRUE(w.adjacent(v, u));
      }
    }
    std::size_t covered = 0;
    for (const auto& r : w.regions) covered += r.nodes.size();
    EXPECT_EQ(covered, 40u);
    EXPECT_FALSE(w.goal().nodes.empty());
    EXPECT_EQ(w.view_objects.size(), 40u * kNumViews);
  }
}

TEST(GenerateWorld, DeterministicPerSeed) {
  World a = generate_world(7, WorldConfig{});
  World b = generate_world(7, WorldConfig{});
  EXPECT_TRUE(a == b);
  EXPECT_EQ(world_to_json(a).dump(), world_to_json(b).dump());
}

TEST(GenerateWorld, SeedsGiveDifferentGraphs) {
  World a = generate_world(7, WorldConfig{});
  World b = generate_world(8, WorldConfig{});
  EXPECT_NE(world_to_json(a)["edges"].dump(), world_to_json(b)["edges"].dump());
}

TEST(GenerateWorld, RejectsBadConfig) {
  WorldConfig c;
  c.num_nodes = 3;
  EXPECT_THROW(generate_world(7, c), ConfigError);
  c = WorldConfig{};
  c.object_vocab_size = 1;
  EXPECT_THROW(generate_world(7, c), ConfigError);
  c = WorldConfig{};
  c.num_regions = 1;
  EXPECT_THROW(generate_world(7, c), ConfigError);
}

TEST(ShortestPath, TrivialWhenEndpointsMatch) {
  World w = generate_world(3, WorldConfig{});
  EXPECT_EQ(shortest_path(w, 5, 5), std::vector<NodeId>{5});
}

TEST(ShortestPath, LighterArcOfUnequalCycle) {
  // 0 -> 1 -> 2 is short; 0 -> 3 -> 2 takes a long detour.
  World w = testing::make_world({{0, 0, 0}, {1, 1, 0}, {2, 0, 0}, {1, -4, 0}}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  EXPECT_EQ(shortest_path(w, 0, 2), brute_force_path(w, 0, 2));
  EXPECT_EQ(shortest_path(w, 0, 2), (std::vector<NodeId>{0, 1, 2}));
}

TEST(ShortestPath, TieGoesToLexicographicallySmallerSequence) {
  // A unit square: 0 -> 1 -> 3 and 0 -> 2 -> 3 are equally long.
  World w = testing::make_world({{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0}}, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
  EXPECT_EQ(shortest_path(w, 0, 3), (std::vector<NodeId>{0, 1, 3}));
  EXPECT_EQ(shortest_path(w, 3, 0), (std::vector<NodeId>{3, 1, 0}));
  EXPECT_EQ(shortest_path(w, 0, 3), brute_force_path(w, 0, 3));
}

TEST(ShortestPath, MatchesExhaustiveSearchOnSmallGraphs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(0.0, 4.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 5;
    std::vector<Vec3> pos;
    for (int i = 0; i < n; ++i) pos.push_back({coord(rng), coord(rng), trial % 3 == 0 ? coord(rng) : 0.0});
    // Spanning chain plus random chords keeps the graph connected.
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (int i = 1; i < n; ++i) edges.emplace_back(static_cast<NodeId>(rng() % i), i);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (rng() % 3 == 0 && std::find(edges.begin(), edges.end(), std::pair{a, b}) == edges.end()) edges.emplace_back(a, b);
    // Snap a third of the trials to a lattice so equal-length ties happen.
    if (trial % 3 == 1)
      for (auto& p : pos) p = {std::round(p.x), std::round(p.y), 0.0};
    bool distinct = true;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (pos[a] == pos[b]) distinct = false;
    if (!distinct) continue;
    World w = testing::make_world(pos, edges);
    for (NodeId a = 0; a < n; ++a)
      for (NodeId b = 0; b < n; ++b) {
        auto got = shortest_path(w, a, b);
        auto want = brute_force_path(w, a, b);
        ASSERT_NEAR(path_length(w, got), path_length(w, want), 1e-9);
        ASSERT_EQ(got, want) << "trial " << trial << " " << a << "->" << b;
      }
  }
}

TEST(Observe, DeterministicAndTagsValid) {
  World w = generate_world(5, WorldConfig{});
  AgentState s{3, 0.0, 0.0};
  auto a = observe(w, s);
  auto b = observe(w, s);
  for (int v = 0; v < kNumViews; ++v) {
    ASSERT_EQ(a.views[v].regions.size(), b.views[v].regions.size());
    EXPECT_EQ(a.views[v].heading, view_heading(v));
    EXPECT_EQ(a.views[v].elevation, view_elevation(v));
    for (std::size_t r = 0; r < a.views[v].regions.size(); ++r) {
      EXPECT_EQ(a.views[v].regions[r].feature, b.views[v].regions[r].feature);
      EXPECT_EQ(a.views[v].regions[r].geometry, b.views[v].regions[r].geometry);
      EXPECT_LT(a.views[v].regions[r].tag, static_cast<int>(w.object_vocab.size()));
      EXPECT_EQ(a.views[v].regions[r].feature.size(), 64u);
      const auto& g = a.views[v].regions[r].geometry;
      EXPECT_NEAR(g[2] - g[0], g[4], 1e-15);
      EXPECT_NEAR(g[3] - g[1], g[5], 1e-15);
    }
  }
}

TEST(Observe, DifferentNodesLookDifferent) {
  World w = generate_world(5, WorldConfig{});
  auto fingerprint = [&](NodeId n) {
    std::ostringstream os;
    for (const auto& v : observe(w, AgentState{n, 0, 0}).views)
      for (const auto& r : v.regions) os << r.tag << ':' << r.feature[0] << ',';
    return os.str();
  };
  EXPECT_NE(fingerprint(0), fingerprint(1));
  EXPECT_EQ(fingerprint(0), fingerprint(0));
}

TEST(Observe, SameTagSharesPrototypeAcrossPlaces) {
  // Region features are a class prototype plus small noise, so two sightings of
  // one class are closer than sightings of different classes on average.
  World w = generate_world(5, WorldConfig{});
  std::map<int, std::vector<std::vector<double>>> by_tag;
  for (NodeId n = 0; n < 6; ++n)
    for (const auto& v : observe(w, AgentState{n, 0, 0}).views)
      for (const auto& r : v.regions) by_tag[r.tag].push_back(r.feature);
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  const auto& [t0, f0] = *by_tag.begin();
  const auto& [t1, f1] = *std::next(by_tag.begin());
  ASSERT_GE(f0.size(), 2u);
  EXPECT_LT(dist(f0[0], f0[1]), dist(f0[0], f1[0]));
}

TEST(StepTurnBased, RotationsInvert) {
  World w = testing::corridor(2);
  AgentState s{0, 0.0, 0.0};
  AgentState l = step_turn_based(w, s, TurnAction::left);
  EXPECT_NEAR(l.heading, 11 * kPi / 6, 1e-15);
  EXPECT_EQ(step_turn_based(w, l, TurnAction::right), s);
  AgentState t = s;
  for (int i = 0; i < 12; ++i) t = step_turn_based(w, t, TurnAction::left);
  EXPECT_EQ(t.heading, s.heading);
  AgentState off{0, 0.3, 0.0};
  for (int i = 0; i < 12; ++i) off = step_turn_based(w, off, TurnAction::right);
  EXPECT_NEAR(off.heading, 0.3, 1e-12);
}

TEST(StepTurnBased, ElevationClamps) {
  World w = testing::corridor(2);
  AgentState s{0, 0.0, 0.0};
  for (int i = 0; i < 5; ++i) s = step_turn_based(w, s, TurnAction::up);
  EXPECT_DOUBLE_EQ(s.elevation, kPi / 2);
  for (int i = 0; i < 8; ++i) s = step_turn_based(w, s, TurnAction::down);
  EXPECT_DOUBLE_EQ(s.elevation, -kPi / 2);
}

TEST(StepTurnBased, ForwardAlongEdgeAndBlocked) {
  World w = testing::corridor(2);  // node 1 is due north of node 0
  AgentState s{0, 0.0, 0.0};
  EXPECT_EQ(step_turn_based(w, s, TurnAction::forward).node, 1);
  AgentState within{0, 40.0 * kPi / 180, 0.0};
  EXPECT_EQ(step_turn_based(w, within, TurnAction::forward).node, 1);
  AgentState blocked{0, 50.0 * kPi / 180, 0.0};
  EXPECT_EQ(step_turn_based(w, blocked, TurnAction::forward), blocked);
  EXPECT_THROW(step_turn_based(w, s, TurnAction::stop), InvalidAction);
}

TEST(StepTurnBased, ForwardPrefersClosestHeading) {
  // Neighbors at bearings 10, 40 and 340 degrees.
  auto at = [](double deg) { return Vec3{2 * std::sin(deg * kPi / 180), 2 * std::cos(deg * kPi / 180), 0}; };
  World w = testing::make_world({{0, 0, 0}, at(10), at(40), at(-20)}, {{0, 1}, {0, 2}, {0, 3}});
  EXPECT_EQ(step_turn_based(w, AgentState{0, kPi / 6, 0}, TurnAction::forward).node, 2);
  EXPECT_EQ(step_turn_based(w, AgentState{0, 0.0, 0}, TurnAction::forward).node, 1);
  EXPECT_EQ(step_turn_based(w, AgentState{0, 11 * kPi / 6, 0}, TurnAction::forward).node, 3);
}

TEST(StepTurnBased, EveryNeighborReachableByRotateThenForward) {
  World w = generate_world(21, WorldConfig{});
  for (NodeId u = 0; u < w.num_nodes(); ++u)
    for (NodeId v : w.adjacency[u]) {
      AgentState s{u, 0.0, 0.0};
      bool reached = false;
      for (int k = 0; k < 12 && !reached; ++k) {
        reached = step_turn_based(w, s, TurnAction::forward).node == v;
        s = step_turn_based(w, s, TurnAction::right);
      }
      EXPECT_TRUE(reached) << u << "->" << v;
    }
}

TEST(StepViewpoint, MovesAndFacesTravelDirection) {
  World w = testing::make_world({{0, 0, 0}, {3, 3, 0}, {10, 10, 0}}, {{0, 1}, {1, 2}});
  AgentState s{0, 1.0, 0.2};
  EXPECT_EQ(step_viewpoint(w, s, ViewpointChoice::stop()), s);
  AgentState t = step_viewpoint(w, s, ViewpointChoice::to(1));
  EXPECT_EQ(t.node, 1);
  EXPECT_NEAR(t.heading, kPi / 4, 1e-15);  // north-east
  EXPECT_THROW(step_viewpoint(w, s, ViewpointChoice::to(2)), InvalidAction);
}

TEST(NextNodeDirection, AxisAlignedCases) {
  World w = testing::make_world({{0, 0, 0}, {0, 2, 0}, {0, -2, 0}, {2, 0, 2}}, {{0, 1}, {0, 2}, {0, 3}});
  AgentState s{0, 0, 0};
  auto north = next_node_direction(w, s, 1);
  EXPECT_EQ(north.heading, 0.0);
  EXPECT_EQ(north.elevation, 0.0);
  EXPECT_EQ(north.view_index, 12);
  auto behind = next_node_direction(w, s, 2);
  EXPECT_NEAR(behind.heading, kPi, 1e-15);
  EXPECT_EQ(behind.view_index, 12 + 6);
  auto up_east = next_node_direction(w, s, 3);
  EXPECT_NEAR(up_east.heading, kPi / 2, 1e-15);
  EXPECT_NEAR(up_east.elevation, kPi / 4, 1e-15);
  EXPECT_EQ(up_east.view_index, 24 + 3);
  EXPECT_THROW(next_node_direction(w, AgentState{1, 0, 0}, 2), InvalidAction);
}

TEST(NextNodeDirection, BinsMatchBruteForce) {
  for (std::uint64_t seed : {4u, 9u}) {
    WorldConfig cfg;
    World w = generate_world(seed, cfg);
    for (NodeId u = 0; u < w.num_nodes(); ++u)
      for (NodeId v : w.adjacency[u]) {
        auto d = next_node_direction(w, AgentState{u, 0, 0}, v);
        EXPECT_EQ(d.view_index, brute_force_bin(d.heading, d.elevation));
        // Reverse edge points the opposite way.
        auto r = next_node_direction(w, AgentState{v, 0, 0}, u);
        EXPECT_NEAR(std::abs(angle_diff(d.heading, r.heading)), kPi, 1e-12);
      }
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> h(0, 2 * kPi), e(-kPi / 2, kPi / 2);
  for (int i = 0; i < 5000; ++i) {
    const double hh = h(rng), ee = e(rng);
    ASSERT_EQ(view_index_for(hh, ee), brute_force_bin(hh, ee)) << hh << " " << ee;
  }
}

TEST(WorldFile, RoundTripIsBitExact) {
  World w = generate_world(42, WorldConfig{});
  const auto path = std::filesystem::temp_directory_path() / "dialnav_world_test.json";
  save_world(path, w);
  World back = load_world(path);
  EXPECT_TRUE(back == w);
  std::ifstream a(path);
  std::stringstream first;
  first << a.rdbuf();
  save_world(path, back);
  std::ifstream b(path);
  std::stringstream second;
  second << b.rdbuf();
  EXPECT_EQ(first.str(), second.str());
  std::filesystem::remove(path);
  EXPECT_THROW(load_world(path), DataError);
}

TEST(WorldFile, RejectsCorruptContent) {
  auto j = world_to_json(generate_world(42, WorldConfig{}));
  j["edges"].push_back({0, 999});
  EXPECT_THROW(world_from_json(j), DataError);
  auto k = world_to_json(generate_world(42, WorldConfig{}));
  k["version"] = 99;
  EXPECT_THROW(world_from_json(k), DataError);
}

}  // namespace
}  // namespace dialnav
