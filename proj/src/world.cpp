#include "dialnav/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>

#include "dialnav/errors.hpp"
#include "dialnav/rng.hpp"

namespace dialnav {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHalfPi = std::numbers::pi / 2.0;
constexpr double kMinNeighborSeparation = 35.0 * std::numbers::pi / 180.0;
constexpr int kWorldFormatVersion = 1;
constexpr std::uint64_t kPrototypeSeed = 0x5eed0f0b1ec7ULL;
constexpr double kFeatureNoise = 0.35;
constexpr double kSignatureBias = 0.5;
constexpr int kSignatureSize = 4;

// Region names and object classes line up: region i "owns" objects 4i..4i+3,
// which appear more often in its views.
const std::vector<std::string> kRegionNames = {
    "kitchen", "bedroom", "bathroom", "hallway", "office",   "lounge",  "garage", "closet",
    "dining",  "laundry", "nursery",  "library", "attic",    "basement", "porch", "studio"};

const std::vector<std::string> kObjectNames = {
    "oven",      "fridge",   "stove",     "microwave", "bed",    "pillow",     "dresser", "wardrobe",
    "toilet",    "bathtub",  "shower",    "towel",     "door",   "railing",    "stairs",  "rug",
    "desk",      "computer", "printer",   "chair",     "sofa",   "television", "armchair", "fireplace",
    "car",       "toolbox",  "bicycle",   "bucket",    "hanger", "shelf",      "basket",  "umbrella",
    "table",     "chandelier", "candle",  "vase",      "washer", "dryer",      "sink",    "iron",
    "crib",      "toy",      "cradle",    "mobile",    "bookshelf", "globe",   "clock",   "lamp",
    "trunk",     "boxes",    "beam",      "fan",       "boiler", "crate",      "pipe",    "radiator",
    "bench",     "plant",    "swing",     "mat",       "piano",  "guitar",     "drum",    "painting"};

double sq(double v) { return v * v; }

double horizontal_bearing(const Vec3& a, const Vec3& b) { return wrap_angle(std::atan2(b.x - a.x, b.y - a.y)); }

bool near_equal(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

// Heading after k rotation steps; stays on the exact 30-degree grid when it
// started there so that 12 turns return the same bits.
double rotate_heading(double heading, int k) {
  const double steps = heading / kRotationStep;
  const double r = std::round(steps);
  if (std::abs(steps - r) < 1e-9) {
    int idx = (static_cast<int>(r) + k) % kHeadingBins;
    if (idx < 0) idx += kHeadingBins;
    return idx * kRotationStep;
  }
  return wrap_angle(heading + k * kRotationStep);
}

double rotate_elevation(double elevation, int k) {
  const double steps = elevation / kRotationStep;
  const double r = std::round(steps);
  if (std::abs(steps - r) < 1e-9) {
    const int idx = std::clamp(static_cast<int>(r) + k, -3, 3);
    return idx * kRotationStep;
  }
  return std::clamp(elevation + k * kRotationStep, -kHalfPi, kHalfPi);
}

bool separated(const World& w, NodeId at, NodeId other, const std::vector<std::vector<NodeId>>& adj) {
  const double b = horizontal_bearing(w.positions[at], w.positions[other]);
  for (NodeId n : adj[at])
    if (std::abs(angle_diff(b, horizontal_bearing(w.positions[at], w.positions[n]))) < kMinNeighborSeparation)
      return false;
  return true;
}

void add_edge(std::vector<std::vector<NodeId>>& adj, NodeId a, NodeId b) {
  adj[a].insert(std::upper_bound(adj[a].begin(), adj[a].end(), b), b);
  adj[b].insert(std::upper_bound(adj[b].begin(), adj[b].end(), a), a);
}

std::vector<int> components(const std::vector<std::vector<NodeId>>& adj) {
  std::vector<int> comp(adj.size(), -1);
  int next = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<NodeId> stack{static_cast<NodeId>(s)};
    comp[s] = next;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : adj[u])
        if (comp[v] < 0) {
          comp[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return comp;
}

void place_nodes(World& w, std::mt19937_64& rng) {
  const auto& cfg = w.config;
  const double side = std::sqrt(cfg.num_nodes * 6.0);
  const double height = 3.0;
  const double reach = 0.8 * cfg.max_edge_len;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  w.positions.push_back({side / 2, side / 2, height / 2});
  int attempts = 0;
  while (w.num_nodes() < cfg.num_nodes) {
    if (++attempts > 200000) throw ConfigError("world generation: cannot place nodes with the configured spacing");
    const Vec3& anchor = w.positions[static_cast<std::size_t>(unit(rng) * w.num_nodes()) % w.positions.size()];
    const double ang = unit(rng) * kTwoPi;
    const double r = cfg.min_node_spacing + unit(rng) * (reach - cfg.min_node_spacing);
    Vec3 p{anchor.x + r * std::sin(ang), anchor.y + r * std::cos(ang), anchor.z + (unit(rng) - 0.5) * 1.0};
    if (p.x < 0 || p.x > side || p.y < 0 || p.y > side || p.z < 0 || p.z > height) continue;
    const double anchor_d = std::sqrt(sq(p.x - anchor.x) + sq(p.y - anchor.y) + sq(p.z - anchor.z));
    if (anchor_d > reach) continue;
    bool ok = true;
    for (const Vec3& q : w.positions)
      if (sq(p.x - q.x) + sq(p.y - q.y) + sq(p.z - q.z) < sq(cfg.min_node_spacing)) {
        ok = false;
        break;
      }
    if (ok) w.positions.push_back(p);
  }
}

void connect_nodes(World& w) {
  const auto& cfg = w.config;
  const int n = w.num_nodes();
  struct Cand {
    double len;
    NodeId a, b;
  };
  std::vector<Cand> cands;
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = a + 1; b < n; ++b) {
      const double d = w.distance(a, b);
      if (d <= cfg.max_edge_len) cands.push_back({d, a, b});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    return std::tie(x.len, x.a, x.b) < std::tie(y.len, y.a, y.b);
  });
  auto& adj = w.adjacency;
  adj.assign(static_cast<std::size_t>(n), {});
  const double local = 0.8 * cfg.max_edge_len;
  for (const Cand& c : cands) {
    if (c.len > local) break;
    if (static_cast<int>(adj[c.a].size()) >= cfg.max_degree || static_cast<int>(adj[c.b].size()) >= cfg.max_degree)
      continue;
    if (separated(w, c.a, c.b, adj) && separated(w, c.b, c.a, adj)) add_edge(adj, c.a, c.b);
  }
  // Bridge components with the shortest cross edge, preferring ones that keep
  // neighbor headings apart.
  for (;;) {
    const auto comp = components(adj);
    if (*std::max_element(comp.begin(), comp.end()) == 0) break;
    const Cand* best = nullptr;
    const Cand* fallback = nullptr;
    for (const Cand& c : cands) {
      if (comp[c.a] == comp[c.b]) continue;
      if (fallback == nullptr) fallback = &c;
      if (separated(w, c.a, c.b, adj) && separated(w, c.b, c.a, adj)) {
        best = &c;
        break;
      }
    }
    if (best == nullptr) best = fallback;
    if (best == nullptr) throw ConfigError("world generation: node cloud is not connectable within max_edge_len");
    add_edge(adj, best->a, best->b);
  }
}

void assign_regions(World& w, std::mt19937_64& rng) {
  const int n = w.num_nodes();
  const int k = w.config.num_regions;
  std::vector<NodeId> seeds{static_cast<NodeId>(std::uniform_int_distribution<int>(0, n - 1)(rng))};
  while (static_cast<int>(seeds.size()) < k) {
    NodeId far = -1;
    double far_d = -1;
    for (NodeId u = 0; u < n; ++u) {
      double d = std::numeric_limits<double>::infinity();
      for (NodeId s : seeds) d = std::min(d, w.distance(u, s));
      if (d > far_d) {
        far_d = d;
        far = u;
      }
    }
    seeds.push_back(far);
  }
  std::vector<int> names(kRegionNames.size());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = static_cast<int>(i);
  std::shuffle(names.begin(), names.end(), rng);
  w.regions.resize(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) w.regions[r].name = kRegionNames[names[r]];
  w.node_region.assign(static_cast<std::size_t>(n), 0);
  for (NodeId u = 0; u < n; ++u) {
    int best = 0;
    for (int r = 1; r < k; ++r)
      if (w.distance(u, seeds[r]) < w.distance(u, seeds[best])) best = r;
    w.node_region[u] = best;
    w.regions[best].nodes.push_back(u);
  }
  w.goal_region = std::uniform_int_distribution<int>(0, k - 1)(rng);
}

int region_name_index(const std::string& name) {
  return static_cast<int>(std::find(kRegionNames.begin(), kRegionNames.end(), name) - kRegionNames.begin());
}

void scatter_objects(World& w, std::mt19937_64& rng) {
  const auto& cfg = w.config;
  const int vocab = cfg.object_vocab_size;
  std::uniform_int_distribution<int> count(cfg.regions_per_view_min, cfg.regions_per_view_max);
  std::uniform_int_distribution<int> any(0, vocab - 1);
  std::uniform_int_distribution<int> sig(0, kSignatureSize - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  w.view_objects.assign(static_cast<std::size_t>(w.num_nodes()) * kNumViews, {});
  for (NodeId u = 0; u < w.num_nodes(); ++u) {
    const int owner = region_name_index(w.regions[w.node_region[u]].name);
    for (int v = 0; v < kNumViews; ++v) {
      auto& tags = w.view_objects[static_cast<std::size_t>(u) * kNumViews + v];
      const int want = std::min(count(rng), vocab);
      while (static_cast<int>(tags.size()) < want) {
        int t = unit(rng) < kSignatureBias ? (owner * kSignatureSize + sig(rng)) % vocab : any(rng);
        if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
      }
    }
  }
}

std::vector<double> gaussian_vector(std::uint64_t seed, int dim, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = nd(rng);
  return v;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_nodes < 4) throw ConfigError("world.num_nodes must be >= 4 (got " + std::to_string(num_nodes) + ")");
  if (num_regions < 2 || num_regions > static_cast<int>(kRegionNames.size()))
    throw ConfigError("world.num_regions must be in [2, " + std::to_string(kRegionNames.size()) + "]");
  if (num_regions > num_nodes) throw ConfigError("world.num_regions must not exceed world.num_nodes");
  if (object_vocab_size < 8 || object_vocab_size > static_cast<int>(kObjectNames.size()))
    throw ConfigError("world.object_vocab_size must be in [8, " + std::to_string(kObjectNames.size()) + "]");
  if (!(max_edge_len > 0)) throw ConfigError("world.max_edge_len must be positive");
  if (!(min_node_spacing > 0) || min_node_spacing >= 0.8 * max_edge_len)
    throw ConfigError("world.min_node_spacing must be positive and below 0.8 * max_edge_len");
  if (max_degree < 2) throw ConfigError("world.max_degree must be >= 2");
  if (regions_per_view_min < 1 || regions_per_view_max < regions_per_view_min)
    throw ConfigError("world.regions_per_view range is invalid");
  if (feature_dim < 1) throw ConfigError("world.feature_dim must be >= 1");
}

bool World::adjacent(NodeId a, NodeId b) const {
  if (!has_node(a) || !has_node(b)) return false;
  const auto& n = adjacency[a];
  return std::binary_search(n.begin(), n.end(), b);
}

double World::distance(NodeId a, NodeId b) const {
  const Vec3& p = positions[a];
  const Vec3& q = positions[b];
  return std::sqrt(sq(p.x - q.x) + sq(p.y - q.y) + sq(p.z - q.z));
}

std::size_t PanoramicObservation::region_count() const {
  std::size_t n = 0;
  for (const auto& v : views) n += v.regions.size();
  return n;
}

std::string_view to_string(TurnAction a) {
  switch (a) {
    case TurnAction::forward: return "FORWARD";
    case TurnAction::left: return "LEFT";
    case TurnAction::right: return "RIGHT";
    case TurnAction::up: return "UP";
    case TurnAction::down: return "DOWN";
    case TurnAction::stop: return "STOP";
  }
  return "?";
}

TurnAction turn_action_from_string(std::string_view s) {
  for (int i = 0; i < kNumTurnActions; ++i)
    if (to_string(static_cast<TurnAction>(i)) == s) return static_cast<TurnAction>(i);
  throw DataError("unknown turn action '" + std::string(s) + "'");
}

World generate_world(std::uint64_t seed, const WorldConfig& cfg) {
  cfg.validate();
  World w;
  w.seed = seed;
  w.config = cfg;
  std::mt19937_64 rng(hash_seed({seed, 0x776f726c64ULL}));
  place_nodes(w, rng);
  connect_nodes(w);
  assign_regions(w, rng);
  w.object_vocab.assign(kObjectNames.begin(), kObjectNames.begin() + cfg.object_vocab_size);
  scatter_objects(w, rng);
  w.feature_seed = rng();
  return w;
}

std::vector<double> graph_distances(const World& world, NodeId from) {
  if (!world.has_node(from)) throw std::out_of_range("graph_distances: unknown node");
  std::vector<double> dist(static_cast<std::size_t>(world.num_nodes()), std::numeric_limits<double>::infinity());
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[from] = 0.0;
  pq.emplace(0.0, from);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (NodeId v : world.adjacency[u]) {
      const double nd = d + world.distance(u, v);
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return dist;
}

std::vector<NodeId> shortest_path(const World& world, NodeId from, NodeId to) {
  if (!world.has_node(from) || !world.has_node(to)) throw std::out_of_range("shortest_path: unknown node");
  // Walk forward greedily along the smallest-id neighbor that stays on some
  // shortest path; this yields the lexicographically smallest one.
  const auto to_goal = graph_distances(world, to);
  std::vector<NodeId> path{from};
  NodeId u = from;
  while (u != to) {
    NodeId next = -1;
    for (NodeId v : world.adjacency[u])
      if (near_equal(world.distance(u, v) + to_goal[v], to_goal[u])) {
        next = v;
        break;
      }
    if (next < 0) throw std::logic_error("shortest_path: graph is disconnected");
    path.push_back(next);
    u = next;
  }
  return path;
}

double path_length(const World& world, std::span<const NodeId> path) {
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) len += world.distance(path[i - 1], path[i]);
  return len;
}

NodeId nearest_region_node(const World& world, NodeId from, int region) {
  const auto dist = graph_distances(world, from);
  NodeId best = -1;
  for (NodeId n : world.regions.at(static_cast<std::size_t>(region)).nodes)
    if (best < 0 || dist[n] < dist[best] - 1e-12) best = n;
  return best;
}

PanoramicObservation observe(const World& world, const AgentState& s) {
  if (!world.has_node(s.node)) throw std::out_of_range("observe: unknown node");
  PanoramicObservation obs;
  obs.node = s.node;
  const int dim = world.config.feature_dim;
  for (int v = 0; v < kNumViews; ++v) {
    auto& view = obs.views[v];
    view.heading = view_heading(v);
    view.elevation = view_elevation(v);
    for (int tag : world.objects_in_view(s.node, v)) {
      RegionObservation r;
      r.tag = tag;
      const std::uint64_t key = hash_seed({world.feature_seed, static_cast<std::uint64_t>(s.node),
                                           static_cast<std::uint64_t>(v), static_cast<std::uint64_t>(tag)});
      r.feature = gaussian_vector(hash_seed({kPrototypeSeed, static_cast<std::uint64_t>(tag)}), dim, 1.0);
      const auto noise = gaussian_vector(key, dim, kFeatureNoise);
      for (int i = 0; i < dim; ++i) r.feature[i] += noise[i];
      std::mt19937_64 g(splitmix64(key));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double x1 = 0.6 * u(g), y1 = 0.6 * u(g);
      const double bw = 0.1 + 0.3 * u(g), bh = 0.1 + 0.3 * u(g);
      r.geometry = {x1, y1, x1 + bw, y1 + bh, bw, bh};
      view.regions.push_back(std::move(r));
    }
  }
  return obs;
}

AgentState step_turn_based(const World& world, const AgentState& s, TurnAction a) {
  if (!world.has_node(s.node)) throw std::out_of_range("step_turn_based: unknown node");
  AgentState out = s;
  switch (a) {
    case TurnAction::left: out.heading = rotate_heading(s.heading, -1); break;
    case TurnAction::right: out.heading = rotate_heading(s.heading, +1); break;
    case TurnAction::up: out.elevation = rotate_elevation(s.elevation, +1); break;
    case TurnAction::down: out.elevation = rotate_elevation(s.elevation, -1); break;
    case TurnAction::forward: {
      NodeId best = -1;
      double best_diff = kForwardCone;
      for (NodeId n : world.adjacency[s.node]) {
        const double d = std::abs(angle_diff(bearing(world, s.node, n), s.heading));
        if (d <= kForwardCone && (best < 0 || d < best_diff)) {
          best = n;
          best_diff = d;
        }
      }
      if (best >= 0) out.node = best;
      break;
    }
    case TurnAction::stop: throw InvalidAction("STOP is not a motion; the episode loop handles it");
  }
  return out;
}

AgentState step_viewpoint(const World& world, const AgentState& s, ViewpointChoice c) {
  if (c.is_stop()) return s;
  if (!world.adjacent(s.node, *c.node))
    throw InvalidAction("node " + std::to_string(*c.node) + " is not adjacent to " + std::to_string(s.node));
  return AgentState{*c.node, bearing(world, s.node, *c.node), 0.0};
}

Direction next_node_direction(const World& world, const AgentState& s, NodeId next) {
  if (!world.adjacent(s.node, next))
    throw InvalidAction("node " + std::to_string(next) + " is not adjacent to " + std::to_string(s.node));
  Direction d;
  d.heading = bearing(world, s.node, next);
  d.elevation = edge_elevation(world, s.node, next);
  d.view_index = view_index_for(d.heading, d.elevation);
  return d;
}

double bearing(const World& world, NodeId a, NodeId b) {
  return horizontal_bearing(world.positions[a], world.positions[b]);
}

double edge_elevation(const World& world, NodeId a, NodeId b) {
  const Vec3& p = world.positions[a];
  const Vec3& q = world.positions[b];
  return std::atan2(q.z - p.z, std::hypot(q.x - p.x, q.y - p.y));
}

int view_index_for(double heading, double elevation) {
  int h = static_cast<int>(std::floor(wrap_angle(heading) / kRotationStep + 0.5)) % kHeadingBins;
  const double quarter = kRotationStep / 2.0;
  const int e = elevation < -quarter ? 0 : (elevation > quarter ? 2 : 1);
  return e * kHeadingBins + h;
}

double view_heading(int view) { return (view % kHeadingBins) * kRotationStep; }
double view_elevation(int view) { return (view / kHeadingBins - 1) * kRotationStep; }

double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d <= -std::numbers::pi) d += kTwoPi;
  if (d > std::numbers::pi) d -= kTwoPi;
  return d;
}

const std::vector<std::string>& object_catalog() { return kObjectNames; }
const std::vector<std::string>& region_catalog() { return kRegionNames; }

const World& world_for(const WorldSet& worlds, const std::string& id) {
  auto it = worlds.find(id);
  if (it == worlds.end()) throw DataError("unknown world '" + id + "'");
  return it->second;
}

nlohmann::json world_to_json(const World& w) {
  using nlohmann::json;
  json j;
  j["format"] = "dialnav-world";
  j["version"] = kWorldFormatVersion;
  j["seed"] = w.seed;
  const auto& c = w.config;
  j["config"] = {{"num_nodes", c.num_nodes},
                 {"num_regions", c.num_regions},
                 {"object_vocab_size", c.object_vocab_size},
                 {"max_edge_len", c.max_edge_len},
                 {"min_node_spacing", c.min_node_spacing},
                 {"max_degree", c.max_degree},
                 {"regions_per_view_min", c.regions_per_view_min},
                 {"regions_per_view_max", c.regions_per_view_max},
                 {"feature_dim", c.feature_dim}};
  json nodes = json::array();
  for (const Vec3& p : w.positions) nodes.push_back({p.x, p.y, p.z});
  j["positions"] = std::move(nodes);
  json edges = json::array();
  for (NodeId a = 0; a < w.num_nodes(); ++a)
    for (NodeId b : w.adjacency[a])
      if (a < b) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  json regions = json::array();
  for (const Region& r : w.regions) regions.push_back({{"name", r.name}, {"nodes", r.nodes}});
  j["regions"] = std::move(regions);
  j["goal_region"] = w.goal_region;
  j["object_vocab"] = w.object_vocab;
  j["view_objects"] = w.view_objects;
  j["feature_seed"] = w.feature_seed;
  return j;
}

World world_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "dialnav-world") throw DataError("not a world file");
    if (j.at("version").get<int>() != kWorldFormatVersion)
      throw DataError("unsupported world version " + j.at("version").dump());
    World w;
    w.seed = j.at("seed").get<std::uint64_t>();
    const auto& c = j.at("config");
    w.config.num_nodes = c.at("num_nodes");
    w.config.num_regions = c.at("num_regions");
    w.config.object_vocab_size = c.at("object_vocab_size");
    w.config.max_edge_len = c.at("max_edge_len");
    w.config.min_node_spacing = c.at("min_node_spacing");
    w.config.max_degree = c.at("max_degree");
    w.config.regions_per_view_min = c.at("regions_per_view_min");
    w.config.regions_per_view_max = c.at("regions_per_view_max");
    w.config.feature_dim = c.at("feature_dim");
    for (const auto& p : j.at("positions")) w.positions.push_back({p.at(0), p.at(1), p.at(2)});
    const int n = w.num_nodes();
    w.adjacency.assign(static_cast<std::size_t>(n), {});
    for (const auto& e : j.at("edges")) {
      const NodeId a = e.at(0), b = e.at(1);
      if (!w.has_node(a) || !w.has_node(b) || a == b) throw DataError("world edge refers to an invalid node");
      add_edge(w.adjacency, a, b);
    }
    w.node_region.assign(static_cast<std::size_t>(n), -1);
    for (const auto& r : j.at("regions")) {
      Region reg{r.at("name"), r.at("nodes").get<std::vector<NodeId>>()};
      for (NodeId u : reg.nodes) {
        if (!w.has_node(u)) throw DataError("world region refers to an invalid node");
        w.node_region[u] = static_cast<int>(w.regions.size());
      }
      w.regions.push_back(std::move(reg));
    }
    w.goal_region = j.at("goal_region");
    w.object_vocab = j.at("object_vocab").get<std::vector<std::string>>();
    w.view_objects = j.at("view_objects").get<std::vector<std::vector<int>>>();
    w.feature_seed = j.at("feature_seed").get<std::uint64_t>();
    if (w.view_objects.size() != static_cast<std::size_t>(n) * kNumViews)
      throw DataError("world view_objects has the wrong size");
    if (std::find(w.node_region.begin(), w.node_region.end(), -1) != w.node_region.end())
      throw DataError("world regions do not cover every node");
    if (w.goal_region < 0 || w.goal_region >= static_cast<int>(w.regions.size()))
      throw DataError("world goal_region out of range");
    for (const auto& tags : w.view_objects)
      for (int t : tags)
        if (t < 0 || t >= static_cast<int>(w.object_vocab.size())) throw DataError("world object tag out of range");
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed world: ") + e.what());
  }
}

void save_world(const std::filesystem::path& path, const World& world) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << world_to_json(world).dump() << '\n';
}

World load_world(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("missing world file: expected " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return world_from_json(j);
}

}  // namespace dialnav
