#pragma once

// Navigation and classification metrics. Distances to a goal are measured
// along the graph; path similarity uses straight-line node distances.

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "dialnav/world.hpp"

namespace dialnav {

inline constexpr double kSuccessRadius = 3.0;

struct EvalEpisode {
  std::vector<NodeId> executed;
  std::vector<NodeId> reference;
  double start_goal_distance = 0.0;  // graph distance from the start to the goal
  double end_goal_distance = 0.0;    // graph distance from the final node to the goal
  double shortest_length = 0.0;      // equals start_goal_distance
  double executed_length = 0.0;
  double path_fidelity = 1.0;        // nDTW of executed against reference
};

// Goal is a node (the supervision path's terminal node by default).
EvalEpisode make_episode(const World& world, std::vector<NodeId> executed, std::vector<NodeId> reference,
                         NodeId goal);
// Goal is a region; distance to it is the distance to its nearest node.
EvalEpisode make_region_episode(const World& world, std::vector<NodeId> executed, std::vector<NodeId> reference,
                                int region);

double goal_progress(const EvalEpisode& ep);
bool success(const EvalEpisode& ep, double radius = kSuccessRadius);

struct SplResult {
  double value = 0.0;
  int counted = 0;
  int excluded = 0;  // episodes with a zero shortest length
};
SplResult spl(std::span<const EvalEpisode> episodes, double radius = kSuccessRadius);

// Monotone-alignment DTW over Euclidean distances; throws on empty paths.
double dtw(std::span<const Vec3> executed, std::span<const Vec3> reference);
double ndtw(std::span<const Vec3> executed, std::span<const Vec3> reference, double d_th = kSuccessRadius);
double ndtw(const World& world, std::span<const NodeId> executed, std::span<const NodeId> reference,
            double d_th = kSuccessRadius);

struct ClassificationReport {
  double accuracy = 0.0;
  std::optional<double> balanced_accuracy;  // absent when labels hold one class
  int count = 0;
};
ClassificationReport classification_report(std::span<const int> preds, std::span<const int> labels);

// Means over episodes: gp, sr, spl, ndtw, plus counts.
nlohmann::json aggregate_metrics(std::span<const EvalEpisode> episodes);
nlohmann::json to_json(const EvalEpisode& ep);

}  // namespace dialnav
