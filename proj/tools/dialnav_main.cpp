// dialnav: command-line driver for the world -> data -> pretrain -> finetune ->
// train-ask -> evaluate / gameplay pipeline. Artifacts live under --run-dir.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dialnav/errors.hpp"
#include "dialnav/gameplay.hpp"
#include "dialnav/metrics.hpp"
#include "dialnav/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dialnav;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct Common {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string run_dir = "run";
  std::vector<std::string> sets;
};

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path dir;

  fs::path world_file(const std::string& id) const { return dir / "worlds" / (id + ".json"); }
  fs::path data_file(const std::string& name) const { return dir / "data" / (name + ".jsonl"); }
  fs::path checkpoint(const std::string& name) const { return dir / "checkpoints" / (name + ".ckpt"); }
  fs::path report(const std::string& name) const { return dir / "reports" / name; }
  std::string space() const { return std::string(to_string(cfg.finetune.navigator.space)); }
  json stamp() const { return {{"config_hash", hash}, {"seed", cfg.seed}}; }
};

Context resolve(const Common& c) {
  json j = json::object();
  if (!c.config_file.empty()) {
    std::ifstream is(c.config_file);
    if (!is) throw ConfigError("cannot read config file " + c.config_file);
    j = json::parse(is, nullptr, false, true);
    if (j.is_discarded()) throw ConfigError("config file " + c.config_file + " is not valid JSON");
  }
  for (const auto& s : c.sets) apply_override(j, s);
  if (c.seed) j["seed"] = *c.seed;
  Context ctx{run_config_from_json(j), "", c.run_dir};
  ctx.cfg.validate();
  ctx.hash = config_hash(ctx.cfg);
  return ctx;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void require(const fs::path& path, const char* producer) {
  if (!fs::exists(path))
    throw DataError("missing artifact " + path.string() + " (run `dialnav " + producer + "` first)");
}

WorldSet load_split(const Context& ctx, Split split) {
  WorldSet ws;
  const int n = split == Split::seen ? ctx.cfg.seen_worlds : ctx.cfg.unseen_worlds;
  for (int i = 0; i < n; ++i) {
    const std::string id = world_id(split, i);
    require(ctx.world_file(id), "gen-world");
    ws.emplace(id, load_world(ctx.world_file(id)));
  }
  return ws;
}

template <class T>
T load_data(const Context& ctx, const std::string& name, T (*loader)(const fs::path&)) {
  require(ctx.data_file(name), "gen-data");
  return loader(ctx.data_file(name));
}

fs::path navigator_path(const Context& ctx, bool with_head) {
  return ctx.checkpoint("navigator-" + ctx.space() + (with_head ? "-ask" : ""));
}

void log_line(const std::string& what) { std::cerr << "[dialnav] " << what << '\n'; }

int cmd_gen_world(const Context& ctx) {
  json listing = json::array();
  for (Split split : {Split::seen, Split::unseen})
    for (const auto& [id, w] : make_worlds(ctx.cfg, split)) {
      fs::create_directories(ctx.world_file(id).parent_path());
      save_world(ctx.world_file(id), w);
      std::size_t edges = 0;
      for (const auto& a : w.adjacency) edges += a.size();
      listing.push_back({{"id", id}, {"split", to_string(split)}, {"seed", w.seed},
                         {"nodes", w.num_nodes()}, {"edges", edges / 2}});
    }
  json cfg = to_json(ctx.cfg);
  write_json(ctx.dir / "config.json", {{"config", cfg}, {"config_hash", ctx.hash}});
  json r = ctx.stamp();
  r["worlds"] = listing;
  write_json(ctx.report("gen-world.json"), r);
  log_line("wrote " + std::to_string(listing.size()) + " worlds");
  return 0;
}

int cmd_gen_data(const Context& ctx) {
  const WorldSet seen = load_split(ctx, Split::seen), unseen = load_split(ctx, Split::unseen);
  const Dataset d = make_dataset(ctx.cfg, seen, unseen);
  fs::create_directories(ctx.dir / "data");
  save_dataset(ctx.data_file("cvdn_train"), d.train_dialogs);
  save_dataset(ctx.data_file("ndh_train"), d.train_ndh);
  save_dataset(ctx.data_file("vln_train"), d.train_vln);
  save_dataset(ctx.data_file("ask_train"), d.train_ask);
  save_dataset(ctx.data_file("cvdn_val_seen"), d.val_seen_dialogs);
  save_dataset(ctx.data_file("cvdn_val_unseen"), d.val_unseen_dialogs);
  save_dataset(ctx.data_file("ndh_val_seen"), d.val_seen_ndh);
  save_dataset(ctx.data_file("ndh_val_unseen"), d.val_unseen_ndh);
  save_dataset(ctx.data_file("ask_val_seen"), d.val_seen_ask);
  save_dataset(ctx.data_file("ask_val_unseen"), d.val_unseen_ask);
  json r = ctx.stamp();
  r["counts"] = {{"cvdn_train", d.train_dialogs.size()},       {"ndh_train", d.train_ndh.size()},
                 {"vln_train", d.train_vln.size()},            {"ask_train", d.train_ask.size()},
                 {"cvdn_val_seen", d.val_seen_dialogs.size()}, {"cvdn_val_unseen", d.val_unseen_dialogs.size()},
                 {"ndh_val_seen", d.val_seen_ndh.size()},      {"ndh_val_unseen", d.val_unseen_ndh.size()},
                 {"ask_val_seen", d.val_seen_ask.size()},      {"ask_val_unseen", d.val_unseen_ask.size()}};
  write_json(ctx.report("gen-data.json"), r);
  log_line("wrote datasets: " + r["counts"].dump());
  return 0;
}

int cmd_pretrain(const Context& ctx) {
  const WorldSet seen = load_split(ctx, Split::seen);
  Dataset d;
  d.train_ndh = load_data(ctx, "ndh_train", &load_ndh_dataset);
  const PretrainData data = make_pretrain_data(ctx.cfg, seen, d);
  const auto vocab = Vocabulary::standard();
  PretrainResult res = run_pretraining(ctx.cfg.encoder, vocab, data, ctx.cfg.pretrain.flags, ctx.cfg.pretrain.train,
                                       ctx.cfg.seed);
  json meta = ctx.stamp();
  meta["flags"] = to_json(ctx.cfg.pretrain.flags);
  meta["object_tags"] = ctx.cfg.pretrain.flags.use_object_tags();
  fs::create_directories(ctx.checkpoint("encoder").parent_path());
  save_encoder(ctx.checkpoint("encoder"), res.encoder, vocab, meta);
  fs::create_directories(ctx.dir / "reports");
  write_pretrain_report(ctx.report("pretrain_curve.jsonl"), res.curve);
  json r = ctx.stamp();
  r["flags"] = meta["flags"];
  r["steps"] = res.curve.size();
  json last = json::object();
  for (const auto& p : res.curve)
    for (const auto& [k, v] : p.losses) last[k] = v;
  r["final_losses"] = last;
  write_json(ctx.report("pretrain.json"), r);
  log_line("pretraining finished after " + std::to_string(res.curve.size()) + " steps");
  return 0;
}

int cmd_finetune(const Context& ctx) {
  require(ctx.checkpoint("encoder"), "pretrain");
  LoadedEncoder enc = load_encoder(ctx.checkpoint("encoder"));
  const WorldSet seen = load_split(ctx, Split::seen);
  const auto ndh = load_data(ctx, "ndh_train", &load_ndh_dataset);
  const auto vln = load_data(ctx, "vln_train", &load_ndh_dataset);
  Navigator nav = build_navigator(ctx.cfg, std::move(enc.encoder), std::move(enc.vocab), enc.meta.value("object_tags", false));
  const TrainLog log = train_imitation(nav, seen, ndh, vln, ctx.cfg.finetune.imitation, ctx.cfg.seed);
  json meta = ctx.stamp();
  meta["encoder"] = enc.meta;
  save_navigator(navigator_path(ctx, false), nav, nullptr, meta);
  json r = ctx.stamp();
  r["space"] = ctx.space();
  r["steps"] = log.loss.size();
  r["loss"] = log.loss;
  r["checksum"] = nav.checksum();
  write_json(ctx.report("finetune-" + ctx.space() + ".json"), r);
  log_line("fine-tuned " + ctx.space() + " navigator, final loss " +
           (log.loss.empty() ? std::string("n/a") : std::to_string(log.loss.back())));
  return 0;
}

int cmd_train_ask(const Context& ctx) {
  require(navigator_path(ctx, false), "finetune");
  LoadedNavigator ln = load_navigator(navigator_path(ctx, false));
  const WorldSet seen = load_split(ctx, Split::seen);
  const auto examples = load_data(ctx, "ask_train", &load_ask_dataset);
  const std::uint64_t before = ln.navigator->checksum();
  const AskTrainResult res = train_question_head(*ln.navigator, seen, examples, ctx.cfg.ask, ctx.cfg.seed);
  const std::uint64_t after = ln.navigator->checksum();
  json meta = ln.meta;
  meta["ask"] = ctx.stamp();
  save_navigator(navigator_path(ctx, true), *ln.navigator, &res.head, meta);
  json r = ctx.stamp();
  r["space"] = ctx.space();
  r["threshold"] = res.head.threshold;
  r["val_balanced_accuracy"] = res.val_balanced_accuracy;
  r["navigator_checksum_before"] = before;
  r["navigator_checksum_after"] = after;
  r["loss"] = res.loss;
  write_json(ctx.report("ask-" + ctx.space() + ".json"), r);
  log_line("question head trained, validation balanced accuracy " + std::to_string(res.val_balanced_accuracy));
  return 0;
}

LoadedNavigator load_best_navigator(const Context& ctx) {
  if (fs::exists(navigator_path(ctx, true))) return load_navigator(navigator_path(ctx, true));
  require(navigator_path(ctx, false), "finetune");
  return load_navigator(navigator_path(ctx, false));
}

int cmd_evaluate(const Context& ctx) {
  LoadedNavigator ln = load_best_navigator(ctx);
  json r = ctx.stamp();
  r["space"] = ctx.space();
  r["goal"] = to_string(ctx.cfg.eval.goal);
  for (Split split : {Split::seen, Split::unseen}) {
    const WorldSet ws = load_split(ctx, split);
    const std::string s(to_string(split));
    const auto ndh = load_data(ctx, "ndh_val_" + s, &load_ndh_dataset);
    json block = evaluate_navigation(*ln.navigator, ws, ndh, ctx.cfg.eval.goal);
    if (ln.head) block["ask"] = evaluate_ask(*ln.navigator, *ln.head, ws, load_data(ctx, "ask_val_" + s, &load_ask_dataset));
    log_line(s + ": " + block["aggregate"].dump());
    r["splits"][s] = std::move(block);
  }
  write_json(ctx.report("eval-" + ctx.space() + ".json"), r);
  return 0;
}

int cmd_gameplay(const Context& ctx) {
  const GameConfig& gc = ctx.cfg.gameplay.game;
  LoadedNavigator ln = load_best_navigator(ctx);
  if (gc.mode == GameMode::general && !ln.head)
    throw DataError("general game play needs a question head: missing artifact " + navigator_path(ctx, true).string() +
                    " (run `dialnav train-ask` first)");
  const WorldSet unseen = load_split(ctx, Split::unseen);
  const auto dialogs = load_data(ctx, "cvdn_val_unseen", &load_cvdn_dataset);
  if (dialogs.empty()) throw DataError("no unseen validation dialogs to draw game tasks from");
  const std::string tag = std::string(to_string(gc.mode)) + "-" + ctx.space();
  const fs::path dir = ctx.dir / "episodes" / tag;
  fs::create_directories(dir);
  std::vector<EvalEpisode> eps;
  std::map<std::string, int> terminations;
  int questions = 0, max_turns_seen = 0;
  for (int i = 0; i < ctx.cfg.gameplay.episodes; ++i) {
    GameTask task = task_from_instance(dialogs[static_cast<std::size_t>(i) % dialogs.size()]);
    task.id += "#" + std::to_string(i);
    const World& w = world_for(unseen, task.world_id);
    LearnedGameNavigator agent(*ln.navigator, ln.head ? &*ln.head : nullptr);
    const EpisodeLog log = run_episode(agent, scripted_questioner, scripted_guide, w, task, gc);
    char name[32];
    std::snprintf(name, sizeof name, "episode-%03d.jsonl", i);
    write_episode_log(dir / name, log);
    const auto ref = shortest_path(w, task.start, nearest_region_node(w, task.start, task.goal_region));
    eps.push_back(make_region_episode(w, log.path, ref, task.goal_region));
    ++terminations[log.termination];
    questions += static_cast<int>(log.question_steps().size());
    max_turns_seen = std::max(max_turns_seen, log.turns);
  }
  json r = ctx.stamp();
  r["mode"] = to_string(gc.mode);
  r["space"] = ctx.space();
  r["aggregate"] = aggregate_metrics(eps);
  r["terminations"] = terminations;
  r["questions"] = questions;
  r["max_turns_used"] = max_turns_seen;
  write_json(ctx.report("gameplay-" + tag + ".json"), r);
  log_line("game play " + tag + ": " + r["aggregate"].dump());
  return 0;
}

int cmd_replay(const Common& c, const std::string& log_file, const std::string& world_file) {
  if (!fs::exists(log_file)) throw DataError("missing artifact " + log_file);
  const EpisodeLog log = read_episode_log(log_file);
  fs::path wf = world_file;
  if (wf.empty()) wf = fs::path(c.run_dir) / "worlds" / (log.header.at("task").at("world_id").get<std::string>() + ".json");
  require(wf, "gen-world");
  const ReplayResult res = replay_episode(load_world(wf), log);
  std::cout << json{{"matches", res.matches}, {"path", res.path}, {"metrics", res.metrics}}.dump(2) << '\n';
  if (!res.matches) {
    std::cerr << "replayed metrics differ from the logged ones\n";
    return kExitData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialnav: dialog-conditioned navigation on synthetic worlds"};
  app.require_subcommand(1);
  Common common;
  std::string space, mode, log_file, world_file;
  int row = 0, episodes = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_file, "JSON run configuration");
    sub->add_option("--seed", common.seed, "global seed (overrides the config)");
    sub->add_option("--run-dir", common.run_dir, "artifact directory")->capture_default_str();
    sub->add_option("--set", common.sets, "override a config key, e.g. --set finetune.imitation.steps=50");
  };
  auto add_space = [&](CLI::App* sub) {
    sub->add_option("--action-space", space, "viewpoint or turn-based")->check(CLI::IsMember({"viewpoint", "turn-based"}));
  };

  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"gen-world", "gen-data", "pretrain", "finetune", "train-ask", "evaluate", "gameplay", "replay"})
    add_common(subs[name] = app.add_subcommand(name));
  subs["gen-world"]->description("generate seen and unseen worlds");
  subs["gen-data"]->description("simulate dialogs and extract training and validation sets");
  subs["pretrain"]->description("run the pretraining curriculum and save the encoder");
  subs["pretrain"]->add_option("--curriculum-row", row, "ablation row 1..6 (overrides pretrain.flags)")->check(CLI::Range(1, 6));
  subs["finetune"]->description("imitation-train the navigator");
  subs["train-ask"]->description("train the question head on the frozen navigator");
  subs["evaluate"]->description("evaluate on the seen and unseen validation splits");
  subs["gameplay"]->description("play navigator-questioner-guide episodes on unseen worlds");
  subs["gameplay"]->add_option("--mode", mode, "heuristic4 or general")->check(CLI::IsMember({"heuristic4", "general"}));
  subs["gameplay"]->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
  subs["replay"]->description("re-derive the metrics of an episode log");
  subs["replay"]->add_option("--log", log_file, "episode log (JSONL)")->required();
  subs["replay"]->add_option("--world", world_file, "world file (default: <run-dir>/worlds/<world_id>.json)");
  for (const char* name : {"finetune", "train-ask", "evaluate", "gameplay"}) add_space(subs[name]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (!space.empty()) common.sets.push_back("finetune.navigator.space=" + space);
    if (row > 0) common.sets.push_back("pretrain.flags=" + to_json(CurriculumFlags::row(row)).dump());
    if (!mode.empty()) common.sets.push_back("gameplay.game.mode=" + mode);
    if (episodes > 0) common.sets.push_back("gameplay.episodes=" + std::to_string(episodes));

    if (subs["replay"]->parsed()) return cmd_replay(common, log_file, world_file);
    const Context ctx = resolve(common);
    const auto t0 = std::chrono::steady_clock::now();
    int rc = 0;
    if (subs["gen-world"]->parsed()) rc = cmd_gen_world(ctx);
    else if (subs["gen-data"]->parsed()) rc = cmd_gen_data(ctx);
    else if (subs["pretrain"]->parsed()) rc = cmd_pretrain(ctx);
    else if (subs["finetune"]->parsed()) rc = cmd_finetune(ctx);
    else if (subs["train-ask"]->parsed()) rc = cmd_train_ask(ctx);
    else if (subs["evaluate"]->parsed()) rc = cmd_evaluate(ctx);
    else if (subs["gameplay"]->parsed()) rc = cmd_gameplay(ctx);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("done in " + std::to_string(secs) + " s");
    return rc;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
