#include "dialnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace dialnav {
namespace {

double euclid(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

std::vector<Vec3> positions_of(const World& world, std::span<const NodeId> path) {
  std::vector<Vec3> out;
  for (NodeId n : path) out.push_back(world.positions.at(static_cast<std::size_t>(n)));
  return out;
}

EvalEpisode fill(const World& world, std::vector<NodeId> executed, std::vector<NodeId> reference,
                 const std::vector<double>& to_goal) {
  if (executed.empty() || reference.empty()) throw std::invalid_argument("episode paths must be nonempty");
  EvalEpisode ep;
  ep.start_goal_distance = to_goal[static_cast<std::size_t>(executed.front())];
  ep.end_goal_distance = to_goal[static_cast<std::size_t>(executed.back())];
  if (!std::isfinite(ep.start_goal_distance)) throw std::invalid_argument("goal unreachable from the start");
  ep.shortest_length = ep.start_goal_distance;
  ep.executed_length = path_length(world, executed);
  ep.path_fidelity = ndtw(world, executed, reference);
  ep.executed = std::move(executed);
  ep.reference = std::move(reference);
  return ep;
}

}  // namespace

EvalEpisode make_episode(const World& world, std::vector<NodeId> executed, std::vector<NodeId> reference,
                         NodeId goal) {
  return fill(world, std::move(executed), std::move(reference), graph_distances(world, goal));
}

EvalEpisode make_region_episode(const World& world, std::vector<NodeId> executed, std::vector<NodeId> reference,
                                int region) {
  std::vector<double> best(static_cast<std::size_t>(world.num_nodes()), std::numeric_limits<double>::infinity());
  for (NodeId g : world.regions.at(static_cast<std::size_t>(region)).nodes) {
    const auto d = graph_distances(world, g);
    for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::min(best[i], d[i]);
  }
  return fill(world, std::move(executed), std::move(reference), best);
}

double goal_progress(const EvalEpisode& ep) { return ep.start_goal_distance - ep.end_goal_distance; }

bool success(const EvalEpisode& ep, double radius) { return ep.end_goal_distance <= radius; }

SplResult spl(std::span<const EvalEpisode> episodes, double radius) {
  SplResult r;
  double total = 0.0;
  for (const auto& ep : episodes) {
    if (ep.shortest_length <= 0.0) {
      ++r.excluded;
      continue;
    }
    ++r.counted;
    if (success(ep, radius)) total += ep.shortest_length / std::max(ep.executed_length, ep.shortest_length);
  }
  if (r.excluded > 0)
    std::cerr << "warning: SPL excludes " << r.excluded << " episode(s) that start at the goal\n";
  r.value = r.counted > 0 ? total / r.counted : 0.0;
  return r;
}

double dtw(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("DTW needs nonempty paths");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> D((n + 1) * (m + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return D[i * (m + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = euclid(a[i - 1], b[j - 1]) + std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)});
  return at(n, m);
}

double ndtw(std::span<const Vec3> executed, std::span<const Vec3> reference, double d_th) {
  if (!(d_th > 0.0)) throw std::invalid_argument("nDTW threshold must be positive");
  return std::exp(-dtw(executed, reference) / (static_cast<double>(reference.size()) * d_th));
}

double ndtw(const World& world, std::span<const NodeId> executed, std::span<const NodeId> reference, double d_th) {
  return ndtw(positions_of(world, executed), positions_of(world, reference), d_th);
}

ClassificationReport classification_report(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw std::invalid_argument("one prediction per label");
  ClassificationReport r;
  r.count = static_cast<int>(labels.size());
  if (labels.empty()) return r;
  int correct = 0, pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = preds[i] != 0, y = labels[i] != 0;
    correct += p == y;
    if (y) {
      ++pos;
      tp += p;
    } else {
      ++neg;
      tn += !p;
    }
  }
  r.accuracy = static_cast<double>(correct) / r.count;
  if (pos > 0 && neg > 0) r.balanced_accuracy = 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
  return r;
}

nlohmann::json to_json(const EvalEpisode& ep) {
  return {{"executed", ep.executed},
          {"reference", ep.reference},
          {"gp", goal_progress(ep)},
          {"success", success(ep)},
          {"start_goal_distance", ep.start_goal_distance},
          {"end_goal_distance", ep.end_goal_distance},
          {"shortest_length", ep.shortest_length},
          {"executed_length", ep.executed_length},
          {"ndtw", ep.path_fidelity}};
}

nlohmann::json aggregate_metrics(std::span<const EvalEpisode> episodes) {
  double gp = 0.0, sr = 0.0, fid = 0.0;
  for (const auto& ep : episodes) {
    gp += goal_progress(ep);
    sr += success(ep) ? 1.0 : 0.0;
    fid += ep.path_fidelity;
  }
  const double n = episodes.empty() ? 1.0 : static_cast<double>(episodes.size());
  const auto s = spl(episodes);
  return {{"episodes", episodes.size()}, {"gp", gp / n},       {"sr", sr / n},
          {"spl", s.value},              {"spl_excluded", s.excluded}, {"ndtw", fid / n}};
}

}  // namespace dialnav
