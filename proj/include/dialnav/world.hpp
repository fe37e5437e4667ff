#pragma once

// Procedural navigation worlds: a connected graph of panorama nodes in a 3D
// box, partitioned into named regions, with object tags per panorama view.
//
// Angles follow the panorama convention: heading 0 faces +y ("north") and
// grows clockwise toward +x; elevation is positive upward. Panoramas are
// world-aligned: view v has heading (v % 12) * 30 deg and elevation
// (v / 12 - 1) * 30 deg.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dialnav {

using NodeId = int;

inline constexpr int kHeadingBins = 12;
inline constexpr int kElevationBins = 3;
inline constexpr int kNumViews = kHeadingBins * kElevationBins;
inline constexpr double kRotationStep = std::numbers::pi / 6.0;  // 30 degrees
inline constexpr double kForwardCone = std::numbers::pi / 4.0;   // 45 degrees
inline constexpr int kGeometryDim = 6;

struct Vec3 {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

struct WorldConfig {
  int num_nodes = 40;
  int num_regions = 4;
  int object_vocab_size = 64;
  double max_edge_len = 5.0;
  double min_node_spacing = 2.0;
  int max_degree = 4;
  int regions_per_view_min = 1;
  int regions_per_view_max = 4;
  int feature_dim = 64;

  // Throws ConfigError.
  void validate() const;
  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct Region {
  std::string name;
  std::vector<NodeId> nodes;
  friend bool operator==(const Region&, const Region&) = default;
};

struct World {
  std::uint64_t seed = 0;
  WorldConfig config;
  std::vector<Vec3> positions;
  std::vector<std::vector<NodeId>> adjacency;  // sorted ascending
  std::vector<Region> regions;
  std::vector<int> node_region;
  int goal_region = 0;
  std::vector<std::string> object_vocab;
  std::vector<std::vector<int>> view_objects;  // index: node * kNumViews + view
  std::uint64_t feature_seed = 0;

  int num_nodes() const noexcept { return static_cast<int>(positions.size()); }
  bool has_node(NodeId n) const noexcept { return n >= 0 && n < num_nodes(); }
  bool adjacent(NodeId a, NodeId b) const;
  double distance(NodeId a, NodeId b) const;
  std::span<const int> objects_in_view(NodeId n, int view) const {
    return view_objects[static_cast<std::size_t>(n) * kNumViews + view];
  }
  const Region& goal() const { return regions[static_cast<std::size_t>(goal_region)]; }
  bool in_region(NodeId n, int region) const { return node_region[static_cast<std::size_t>(n)] == region; }

  friend bool operator==(const World&, const World&) = default;
};

struct AgentState {
  NodeId node = 0;
  double heading = 0.0;    // [0, 2pi)
  double elevation = 0.0;  // [-pi/2, pi/2]
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct RegionObservation {
  std::vector<double> feature;  // feature_dim
  std::array<double, kGeometryDim> geometry{};
  int tag = 0;  // index into World::object_vocab
};

struct ViewObservation {
  double heading = 0.0;
  double elevation = 0.0;
  std::vector<RegionObservation> regions;
};

struct PanoramicObservation {
  NodeId node = 0;
  std::array<ViewObservation, kNumViews> views;

  std::size_t region_count() const;
};

enum class TurnAction { forward, left, right, up, down, stop };
inline constexpr int kNumTurnActions = 6;
std::string_view to_string(TurnAction a);
TurnAction turn_action_from_string(std::string_view s);

struct ViewpointChoice {
  std::optional<NodeId> node;  // nullopt means STOP
  static ViewpointChoice stop() { return {}; }
  static ViewpointChoice to(NodeId n) { return {n}; }
  bool is_stop() const noexcept { return !node.has_value(); }
};

struct Direction {
  double heading = 0.0;
  double elevation = 0.0;
  int view_index = 0;
};

// Generates a world; throws ConfigError for invalid configs.
World generate_world(std::uint64_t seed, const WorldConfig& cfg);

// Minimum-length path including both endpoints; among equal-length paths the
// lexicographically smallest node sequence.
std::vector<NodeId> shortest_path(const World& world, NodeId from, NodeId to);
// Single-source shortest distances along edges.
std::vector<double> graph_distances(const World& world, NodeId from);
double path_length(const World& world, std::span<const NodeId> path);

// Nearest node (by graph distance, then id) of a region, and the path to it.
NodeId nearest_region_node(const World& world, NodeId from, int region);

PanoramicObservation observe(const World& world, const AgentState& s);

AgentState step_turn_based(const World& world, const AgentState& s, TurnAction a);
AgentState step_viewpoint(const World& world, const AgentState& s, ViewpointChoice c);
Direction next_node_direction(const World& world, const AgentState& s, NodeId next);

// Heading/elevation of the displacement a -> b.
double bearing(const World& world, NodeId a, NodeId b);
double edge_elevation(const World& world, NodeId a, NodeId b);
// The 36-view bin containing a direction.
int view_index_for(double heading, double elevation);
double view_heading(int view);
double view_elevation(int view);
// Signed difference a - b wrapped into (-pi, pi].
double angle_diff(double a, double b);
double wrap_angle(double a);

const std::vector<std::string>& object_catalog();
const std::vector<std::string>& region_catalog();

// Worlds keyed by their dataset id.
using WorldSet = std::map<std::string, World>;
// Throws DataError naming the id when absent.
const World& world_for(const WorldSet& worlds, const std::string& id);

nlohmann::json world_to_json(const World& world);
World world_from_json(const nlohmann::json& j);
void save_world(const std::filesystem::path& path, const World& world);
World load_world(const std::filesystem::path& path);

}  // namespace dialnav
