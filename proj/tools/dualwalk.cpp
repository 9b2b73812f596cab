// dualwalk: pipeline driver.
//
//   preprocess -> pretrain -> cluster -> train -> eval | longpath | dump-policy | dump-trajectories
//
// Every stage writes <run>/manifests/<stage>.json and checks the hashes in its
// upstream manifest before reading anything.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "dualwalk/artifact.hpp"
#include "dualwalk/cluster.hpp"
#include "dualwalk/config.hpp"
#include "dualwalk/embed.hpp"
#include "dualwalk/env.hpp"
#include "dualwalk/error.hpp"
#include "dualwalk/eval.hpp"
#include "dualwalk/kernels.hpp"
#include "dualwalk/kg.hpp"
#include "dualwalk/longpath.hpp"
#include "dualwalk/policy.hpp"
#include "dualwalk/reward.hpp"
#include "dualwalk/trainer.hpp"

namespace fs = std::filesystem;
using namespace dualwalk;

namespace {

struct Options {
  std::vector<std::string> config_files;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> beam;
  std::string run;
  std::string runs_root = "runs";
  // eval
  std::string manifest;
  std::string output;
  // dumps
  std::size_t queries = 10;
  std::size_t rollouts = 5;
};

// Stage that must have completed before each stage can run.
const char* upstream_of(const std::string& stage) {
  if (stage == "pretrain") return "preprocess";
  if (stage == "cluster") return "pretrain";
  if (stage == "train") return "cluster";
  if (stage == "eval" || stage == "longpath" || stage == "dump-policy" || stage == "dump-trajectories") return "train";
  return nullptr;
}

fs::path manifest_path(const fs::path& run, const std::string& stage) { return run / "manifests" / (stage + ".json"); }

Manifest require_stage(const fs::path& run, const std::string& stage) {
  const auto path = manifest_path(run, stage);
  if (!fs::exists(path)) {
    throw ArtifactError(fmt::format("{} has no '{}' output; run `dualwalk {} --run {}` first", run.string(), stage,
                                    stage, run.string()));
  }
  auto m = Manifest::read(path);
  for (const auto& [name, entry] : m.outputs.items()) {
    const fs::path p = entry.at("path").get<std::string>();
    if (!fs::exists(p)) throw ArtifactError(fmt::format("'{}' output '{}' is missing: {}", stage, name, p.string()));
    if (sha256_file(p) != entry.at("sha256").get<std::string>()) {
      throw ArtifactError(fmt::format("'{}' output '{}' was modified after it was written ({}); re-run `dualwalk {}`",
                                      stage, name, p.string(), stage));
    }
  }
  return m;
}

std::string explicit_config_of(const Manifest& m) {
  if (m.extra.contains("explicit")) return m.extra.at("explicit").get<std::string>();
  return {};
}

struct Run {
  fs::path dir;
  Config config;
  std::optional<Manifest> upstream;
};

// Config precedence: upstream stage snapshot, then --config files, then
// --set and the dedicated flags.
Run open_run(const std::string& stage, const Options& opt) {
  Run run;
  if (!opt.run.empty()) {
    run.dir = opt.run;
    if (!fs::exists(run.dir)) {
      if (stage != "preprocess") throw ArtifactError(fmt::format("run directory '{}' does not exist", opt.run));
    }
  } else if (stage != "preprocess") {
    throw ConfigError(fmt::format("`{}` needs --run <dir> pointing at an existing run", stage));
  }

  if (const char* up = upstream_of(stage)) {
    run.upstream = require_stage(run.dir, up);
    run.config.merge_text(explicit_config_of(*run.upstream), fmt::format("{} manifest", up));
  }
  for (const auto& f : opt.config_files) run.config.merge_file(f);
  for (const auto& kv : opt.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    run.config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.seed) run.config.set("seed", std::to_string(*opt.seed));
  if (opt.threads) run.config.set("threads", std::to_string(*opt.threads));
  if (opt.beam) run.config.set("eval.beam", std::to_string(*opt.beam));

  if (run.dir.empty()) run.dir = make_run_dir(opt.runs_root, run.config.hash8());
  fs::create_directories(run.dir / "manifests");

  if (const auto threads = run.config.get_int("threads"); threads > 0) kernels::set_num_threads(static_cast<int>(threads));
  return run;
}

Manifest new_manifest(const std::string& stage, const Run& run) {
  Manifest m;
  m.stage = stage;
  m.config = run.config.to_json();
  m.seed = run.config.seed();
  m.extra["explicit"] = run.config.explicit_text();
  m.extra["config_hash"] = run.config.hash8();
  return m;
}

void finish(const std::string& stage, const Run& run, const Manifest& m) {
  const auto path = manifest_path(run.dir, stage);
  m.write(path);
  fmt::print(stderr, "{}: done, manifest {}\n", stage, path.string());
}

// Inputs of a stage: the upstream manifest's inputs plus its outputs.
void inherit_inputs(Manifest& m, const Manifest& upstream) {
  for (const auto& [name, entry] : upstream.inputs.items()) m.inputs[name] = entry;
  for (const auto& [name, entry] : upstream.outputs.items()) m.inputs[name] = entry;
}

fs::path input_path(const Manifest& m, const std::string& name) {
  if (!m.inputs.contains(name)) throw ArtifactError(fmt::format("manifest of '{}' does not list '{}'", m.stage, name));
  return m.inputs.at(name).at("path").get<std::string>();
}

fs::path output_path(const Manifest& m, const std::string& name) {
  if (!m.outputs.contains(name)) throw ArtifactError(fmt::format("manifest of '{}' does not list '{}'", m.stage, name));
  return m.outputs.at(name).at("path").get<std::string>();
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ArtifactError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

// The graph is rebuilt from the dataset files hashed by preprocess, with the
// augmentation settings preprocess used, so every stage sees the same ids.
KnowledgeGraph load_graph(const fs::path& run_dir, const Config& config) {
  const auto pre = Manifest::read(manifest_path(run_dir, "preprocess"));
  pre.verify_inputs();
  Config pre_config;
  pre_config.merge_text(explicit_config_of(pre), "preprocess manifest");
  SplitPaths paths;
  paths.train = input_path(pre, "train");
  if (pre.inputs.contains("dev")) paths.dev = input_path(pre, "dev");
  if (pre.inputs.contains("test")) paths.test = input_path(pre, "test");
  auto kg = KnowledgeGraph::load(paths, pre_config.augment());
  if (config.get_bool("dataset.remove_task_edges")) {
    const auto task = config.get("train.task");
    if (task.empty()) throw ConfigError("dataset.remove_task_edges needs train.task");
    if (!kg.relations().contains(task)) throw ConfigError(fmt::format("train.task '{}' is not a relation of the graph", task));
    const auto removed = remove_relation(kg, kg.relations().id(task));
    fmt::print(stderr, "removed {} '{}' edges from the walk graph\n", removed, task);
  }
  return kg;
}

struct Loaded {
  KnowledgeGraph kg;
  EmbeddingStore store;
  ClusterMap clusters;
};

Loaded load_upstream(const Run& run, const Manifest& with_clusters) {
  auto kg = load_graph(run.dir, run.config);
  EmbeddingExpectations expect;
  expect.num_entities = kg.num_entities();
  expect.num_relations = kg.num_relations();
  auto store = load_embeddings(input_path(with_clusters, "embeddings"), expect);
  auto clusters = ClusterMap::read_assignment(input_path(with_clusters, "clusters"), kg, store);
  return {std::move(kg), std::move(store), std::move(clusters)};
}

std::vector<Triple> task_queries(const KnowledgeGraph& kg, Split split, const Config& config) {
  const auto all = kg.triples(split);
  const auto task = config.get("train.task");
  if (task.empty()) return {all.begin(), all.end()};
  const auto r = kg.relations().id(task);
  std::vector<Triple> out;
  for (const auto& t : all) {
    if (t.relation == r) out.push_back(t);
  }
  return out;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw ConfigError(fmt::format("eval.split must be train, dev or test, not '{}'", s));
}

PolicyParameters<float> load_checked_policy(const fs::path& path, const Loaded& l, const Config& config) {
  auto params = load_policy(path);
  const auto want = policy_dims(l.kg, l.clusters, config.get_size("embed.dim"), config.get_size("model.hidden"));
  if (!(params.dims == want)) {
    throw ArtifactError(fmt::format("policy '{}' does not match the graph and clustering of this run", path.string()));
  }
  return params;
}

// ---- stages ----------------------------------------------------------------

void cmd_preprocess(const Options& opt) {
  auto run = open_run("preprocess", opt);
  const auto paths = run.config.splits();
  const auto kg = KnowledgeGraph::load(paths, run.config.augment());
  auto m = new_manifest("preprocess", run);
  m.add_input("train", paths.train);
  if (!paths.dev.empty()) m.add_input("dev", paths.dev);
  if (!paths.test.empty()) m.add_input("test", paths.test);

  const auto dir = run.dir / "graph";
  {
    auto out = open_out(dir / "entities.tsv");
    kg.entities().write(out);
  }
  {
    auto out = open_out(dir / "relations.tsv");
    kg.relations().write(out);
  }
  const auto deg = kg.degree_stats();
  nlohmann::json stats = {{"entities", kg.num_entities()},
                          {"relations", kg.num_relations()},
                          {"raw_relations", kg.num_raw_relations()},
                          {"train", kg.triples(Split::kTrain).size()},
                          {"dev", kg.triples(Split::kDev).size()},
                          {"test", kg.triples(Split::kTest).size()},
                          {"edges", kg.edge_count()},
                          {"degree_mean", deg.mean},
                          {"degree_median", deg.median}};
  {
    auto out = open_out(dir / "stats.json");
    out << stats.dump(2) << '\n';
  }
  m.add_output("entities", dir / "entities.tsv");
  m.add_output("relations", dir / "relations.tsv");
  m.add_output("stats", dir / "stats.json");
  fmt::print("run {}\n{} entities, {} relations, {} train triples, mean out-degree {:.2f}\n", run.dir.string(),
             kg.num_entities(), kg.num_raw_relations(), kg.triples(Split::kTrain).size(), deg.mean);
  finish("preprocess", run, m);
}

void cmd_pretrain(const Options& opt) {
  auto run = open_run("pretrain", opt);
  const auto kg = load_graph(run.dir, run.config);
  const auto cfg = run.config.transe();
  const auto store = train_transe(kg, cfg, [&](std::size_t epoch, double loss) {
    if (epoch % 50 == 0 || epoch == cfg.epochs) fmt::print(stderr, "transe epoch {} loss {:.6f}\n", epoch, loss);
  });
  auto m = new_manifest("pretrain", run);
  inherit_inputs(m, *run.upstream);
  const auto path = run.dir / "embeddings.bin";
  save_embeddings(store, path);
  m.add_output("embeddings", path);
  finish("pretrain", run, m);
}

void cmd_cluster(const Options& opt) {
  auto run = open_run("cluster", opt);
  const auto kg = load_graph(run.dir, run.config);
  EmbeddingExpectations expect;
  expect.num_entities = kg.num_entities();
  expect.num_relations = kg.num_relations();
  const auto store = load_embeddings(output_path(*run.upstream, "embeddings"), expect);
  KMeansResult diag;
  const auto clusters = cluster_entities(kg, store, run.config.num_clusters(), run.config.kmeans(), &diag);

  auto m = new_manifest("cluster", run);
  inherit_inputs(m, *run.upstream);
  {
    auto out = open_out(run.dir / "clusters.tsv");
    clusters.write_assignment(out, kg);
  }
  {
    auto out = open_out(run.dir / "cluster_graph.tsv");
    clusters.write_graph(out);
  }
  m.add_output("clusters", run.dir / "clusters.tsv");
  m.add_output("cluster_graph", run.dir / "cluster_graph.tsv");
  m.extra["kmeans_iterations"] = diag.iterations;
  m.extra["kmeans_repairs"] = diag.repairs;
  if (!diag.wcss_history.empty()) m.extra["wcss"] = diag.wcss_history.back();
  fmt::print("{} clusters after {} iterations ({} empty-cluster repairs)\n", clusters.num_clusters(), diag.iterations,
             diag.repairs);
  finish("cluster", run, m);
}

void cmd_train(const Options& opt) {
  auto run = open_run("train", opt);
  auto m = new_manifest("train", run);
  inherit_inputs(m, *run.upstream);
  const auto l = load_upstream(run, m);
  const Trainer trainer(l.kg, l.clusters, l.store, run.config.train(l.kg));

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& e) {
    if (!std::isfinite(e.loss_giant) || !std::isfinite(e.loss_dwarf)) {
      throw NumericError(fmt::format("non-finite loss at epoch {}", e.epoch));
    }
    fmt::print(stderr, "epoch {} loss_c {:.4f} loss_e {:.4f} pos {:.3f} dev_hits1 {:.3f} dev_mrr {:.3f} ({:.1f}s)\n",
               e.epoch, e.loss_giant, e.loss_dwarf, e.positive_reward_rate, e.dev_hits1, e.dev_mrr, e.wall_seconds);
  };
  const auto result = trainer.train(trainer.initial_parameters(), hooks);

  const nlohmann::json ckpt_manifest = {{"config", run.config.to_json()}, {"best_epoch", result.best_epoch}};
  save_policy(result.best, run.dir / "policy.ckpt", ckpt_manifest);
  save_policy(result.last, run.dir / "policy_last.ckpt", ckpt_manifest);
  {
    auto out = open_out(run.dir / "metrics.csv");
    write_metrics_csv(out, result.history);
  }
  {
    auto out = open_out(run.dir / "timing.csv");
    write_timing_csv(out, result.history);
  }
  m.add_output("policy", run.dir / "policy.ckpt");
  m.add_output("policy_last", run.dir / "policy_last.ckpt");
  m.add_output("metrics", run.dir / "metrics.csv");
  m.add_output("timing", run.dir / "timing.csv");
  m.extra["best_epoch"] = result.best_epoch;
  finish("train", run, m);
}

// Writes the results CSV and, for link prediction, per-query ranks.
void run_eval(const Run& run, const Manifest& train, const fs::path& results_path, const fs::path& ranks_path) {
  const auto l = load_upstream(run, train);
  const auto params = load_checked_policy(input_path(train, "policy"), l, run.config);
  const auto horizon = run.config.get_size("train.T");
  const Environment env(l.kg, l.clusters, horizon, false);
  const auto split = parse_split(run.config.get("eval.split"));
  const auto queries = task_queries(l.kg, split, run.config);
  AnswerIndex known;
  for (auto s : {Split::kTrain, Split::kDev, Split::kTest}) known.add(l.kg.triples(s));
  const auto opts = run.config.eval();

  const auto task = run.config.get("train.task").empty() ? std::string("all") : run.config.get("train.task");
  const auto dataset = run.config.get("dataset.name");
  const auto beam = opts.beam.width;
  const auto seed = run.config.seed();
  std::vector<ResultRow> rows;

  if (!queries.empty()) {
    const auto ev = evaluate_link_prediction(env, params, queries, known, opts);
    const auto& mt = ev.metrics;
    for (const auto& [name, value] : {std::pair{"hits@1", mt.hits1}, std::pair{"hits@3", mt.hits3},
                                      std::pair{"hits@10", mt.hits10}, std::pair{"mrr", mt.mrr}}) {
      rows.push_back({dataset, task, name, value, beam, horizon, seed});
    }
    auto out = open_out(ranks_path);
    out << "source,relation,target,rank\n";
    for (const auto& q : ev.per_query) {
      out << fmt::format("{},{},{},{}\n", l.kg.entities().token(q.triple.source), l.kg.relations().token(q.triple.relation),
                         l.kg.entities().token(q.triple.target), q.rank);
    }
    fmt::print("{} {} queries: hits@1 {:.4f} hits@3 {:.4f} hits@10 {:.4f} mrr {:.4f}\n", mt.queries,
               run.config.get("eval.split"), mt.hits1, mt.hits3, mt.hits10, mt.mrr);
  }
  if (const auto facts = run.config.get("eval.facts"); !facts.empty()) {
    const auto candidates = read_fact_candidates(facts, l.kg);
    const auto fe = fact_prediction_map(env, params, candidates, opts);
    rows.push_back({dataset, task, "map", fe.map, beam, horizon, seed});
    fmt::print("fact prediction MAP {:.4f} over {} groups\n", fe.map, fe.average_precisions.size());
  }
  if (rows.empty()) throw ConfigError("nothing to evaluate: the split has no queries and eval.facts is unset");
  auto out = open_out(results_path);
  write_results_csv(out, rows);
}

void cmd_eval(const Options& opt) {
  if (!opt.manifest.empty()) {
    // Replay: config, seed and inputs come from the manifest alone.
    const fs::path mpath = opt.manifest;
    const auto recorded = Manifest::read(mpath);
    if (recorded.stage != "eval") throw ArtifactError(fmt::format("'{}' is not an eval manifest", mpath.string()));
    recorded.verify_inputs();
    Run run;
    run.dir = fs::absolute(mpath).parent_path().parent_path();
    run.config.merge_text(explicit_config_of(recorded), mpath.string());
    if (const auto threads = run.config.get_int("threads"); threads > 0) kernels::set_num_threads(static_cast<int>(threads));
    const fs::path results = opt.output.empty() ? run.dir / "results.replay.csv" : fs::path(opt.output);
    run_eval(run, recorded, results, run.dir / "ranks.replay.csv");
    const auto expected = recorded.outputs.at("results").at("sha256").get<std::string>();
    if (sha256_file(results) != expected) {
      throw ArtifactError(fmt::format("replayed results {} differ from the recorded ones", results.string()));
    }
    fmt::print("reproduced {} bit-exactly\n", results.string());
    return;
  }
  auto run = open_run("eval", opt);
  auto m = new_manifest("eval", run);
  inherit_inputs(m, *run.upstream);
  const fs::path results = opt.output.empty() ? run.dir / "results.csv" : fs::path(opt.output);
  const auto ranks = run.dir / "ranks.csv";
  run_eval(run, m, results, ranks);
  m.add_output("results", results);
  if (fs::exists(ranks)) m.add_output("ranks", ranks);
  finish("eval", run, m);
}

void cmd_longpath(const Options& opt) {
  auto run = open_run("longpath", opt);
  auto m = new_manifest("longpath", run);
  inherit_inputs(m, *run.upstream);
  auto l = load_upstream(run, m);
  const auto tasks = task_queries(l.kg, Split::kTest, run.config);
  if (tasks.empty()) throw ConfigError("longpath needs test triples (check train.task)");
  const auto dir = run.dir / "longpath";
  const auto mode = run.config.get("longpath.mode");

  if (mode == "ablate") {
    const auto found = find_short_paths(l.kg, tasks, run.config.short_paths());
    const auto report = ablate(l.kg, found.paths, tasks, run.config.get_size("longpath.min_frequency"));
    {
      auto out = open_out(dir / "removed_edges.txt");
      write_triples(out, report.removed, l.kg);
    }
    m.add_output("removed_edges", dir / "removed_edges.txt");
    m.extra["edges_before"] = report.edges_before;
    m.extra["edges_after"] = report.edges_after;
    m.extra["isolated_sources"] = report.isolated_sources;
    fmt::print("removed {} edges ({} -> {}); {} task sources isolated\n", report.removed.size(), report.edges_before,
               report.edges_after, report.isolated_sources);
    l.clusters.rebuild_graph(l.kg);
  } else if (mode != "recover") {
    throw ConfigError(fmt::format("longpath.mode must be ablate or recover, not '{}'", mode));
  }

  AnswerIndex known;
  for (auto s : {Split::kTrain, Split::kDev, Split::kTest}) known.add(l.kg.triples(s));
  const auto facts = run.config.get("eval.facts");
  const char* metric = facts.empty() ? "mrr" : "map";
  const auto lengths = run.config.get_sizes("longpath.lengths");
  const auto sweep = length_sweep(l.kg, lengths, [&](std::size_t T) {
    auto tc = run.config.train(l.kg);
    tc.horizon = T;
    const Trainer trainer(l.kg, l.clusters, l.store, tc);
    const auto result = trainer.train(trainer.initial_parameters());
    const Environment env(l.kg, l.clusters, T, false);
    const auto opts = run.config.eval();
    const double value = facts.empty()
                             ? evaluate_link_prediction(env, result.best, tasks, known, opts).metrics.mrr
                             : fact_prediction_map(env, result.best, read_fact_candidates(facts, l.kg), opts).map;
    fmt::print("T={} {} {:.4f}\n", T, metric, value);
    return value;
  });
  l.clusters.rebuild_graph(l.kg);
  {
    auto out = open_out(dir / "length_metrics.csv");
    write_length_csv(out, sweep, metric);
  }
  m.add_output("length_metrics", dir / "length_metrics.csv");
  finish("longpath", run, m);
}

std::vector<Query> first_queries(const KnowledgeGraph& kg, const Config& config, std::size_t n) {
  std::vector<Query> out;
  for (const auto& t : task_queries(kg, parse_split(config.get("eval.split")), config)) {
    if (out.size() == n) break;
    out.push_back({t.source, t.relation, t.target});
  }
  if (out.empty()) throw ConfigError("no queries in the selected split");
  return out;
}

void cmd_dump_policy(const Options& opt) {
  auto run = open_run("dump-policy", opt);
  auto m = new_manifest("dump-policy", run);
  inherit_inputs(m, *run.upstream);
  const auto l = load_upstream(run, m);
  auto params = load_checked_policy(input_path(m, "policy"), l, run.config);
  const Environment env(l.kg, l.clusters, run.config.get_size("train.T"), false);
  const auto queries = first_queries(l.kg, run.config, opt.queries);

  const auto path = opt.output.empty() ? run.dir / "dumps" / "policy.csv" : fs::path(opt.output);
  auto out = open_out(path);
  out << "query,step,agent,candidate,logp,prob,chosen\n";
  const auto& kg = l.kg;
  RolloutSpec spec;
  spec.giant = spec.dwarf = ActionMode::kGreedy;
  spec.on_step = [&](const StepDistributions& d) {
    for (std::size_t b = 0; b < queries.size(); ++b) {
      const auto q = fmt::format("{}|{}", kg.entities().token(queries[b].source), kg.relations().token(queries[b].relation));
      const auto gbest = argmax_index(d.giant_logp.row(b), d.giant_mask.row(b));
      for (std::size_t a = 0; a < d.giant_mask.cols; ++a) {
        if (!d.giant_mask(b, a)) continue;
        const auto c = d.giant_candidates(b, a);
        const auto name = c == l.clusters.stop() ? std::string("STOP") : std::to_string(c);
        const double lp = d.giant_logp(b, a);
        out << fmt::format("{},{},giant,{},{:.9g},{:.9g},{}\n", q, d.step + 1, name, lp, std::exp(lp), a == gbest ? 1 : 0);
      }
      const auto dbest = argmax_index(d.dwarf_logp.row(b), d.dwarf_mask.row(b));
      for (std::size_t a = 0; a < d.dwarf_mask.cols; ++a) {
        if (!d.dwarf_mask(b, a)) continue;
        const auto name = fmt::format("{}|{}", kg.relations().token(d.dwarf_relations(b, a)),
                                      kg.entities().token(d.dwarf_entities(b, a)));
        const double lp = d.dwarf_logp(b, a);
        out << fmt::format("{},{},dwarf,{},{:.9g},{:.9g},{}\n", q, d.step + 1, name, lp, std::exp(lp), a == dbest ? 1 : 0);
      }
    }
  };
  diffnet::Tape<float> tape(false);
  rollout(env, bind(tape, params), queries, spec);
  out.close();
  m.add_output("policy_dump", path);
  finish("dump-policy", run, m);
}

void cmd_dump_trajectories(const Options& opt) {
  auto run = open_run("dump-trajectories", opt);
  auto m = new_manifest("dump-trajectories", run);
  inherit_inputs(m, *run.upstream);
  const auto l = load_upstream(run, m);
  auto params = load_checked_policy(input_path(m, "policy"), l, run.config);
  const Environment env(l.kg, l.clusters, run.config.get_size("train.T"), false);
  const auto base = first_queries(l.kg, run.config, opt.queries);
  std::vector<Query> queries;
  for (const auto& q : base) queries.insert(queries.end(), opt.rollouts, q);

  RolloutSpec spec;
  spec.seed = run.config.seed(SeedStream::kEval);
  diffnet::Tape<float> tape(false);
  const auto batch = rollout(env, bind(tape, params), queries, spec);
  AnswerIndex known;
  for (auto s : {Split::kTrain, Split::kDev, Split::kTest}) known.add(l.kg.triples(s));
  const auto rewards = compute_rewards(batch, known, l.clusters, l.store, run.config.get_bool("train.dual"));

  const auto dir = run.dir / "dumps";
  const auto traj = opt.output.empty() ? dir / "trajectories.csv" : fs::path(opt.output);
  {
    auto out = open_out(traj);
    write_trajectories_csv(out, batch, l.kg);
  }
  {
    auto out = open_out(dir / "rewards.csv");
    write_rewards_csv(out, rewards);
  }
  m.add_output("trajectories", traj);
  m.add_output("rewards", dir / "rewards.csv");
  fmt::print("{} rollouts, positive reward rate {:.3f}\n", batch.size, positive_reward_rate(rewards));
  finish("dump-trajectories", run, m);
}

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("--config", opt.config_files, "key = value file (repeatable, later files win)")->check(CLI::ExistingFile);
  sub->add_option("--set", opt.sets, "override one key, e.g. --set train.epochs=20 (repeatable)");
  sub->add_option("--seed", opt.seed, "base seed");
  sub->add_option("--threads", opt.threads, "worker threads");
  sub->add_option("--run", opt.run, "run directory (created by preprocess when omitted)");
  sub->add_option("--runs-root", opt.runs_root, "where new run directories go");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualwalk: two-agent walk-based knowledge graph reasoning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Options opt;

  auto* preprocess = app.add_subcommand("preprocess", "load and index the triple files");
  auto* pretrain = app.add_subcommand("pretrain", "train TransE embeddings");
  auto* cluster = app.add_subcommand("cluster", "k-means over entity embeddings and the cluster graph");
  auto* train = app.add_subcommand("train", "train both agents");
  auto* eval = app.add_subcommand("eval", "link prediction / fact prediction metrics");
  auto* longpath = app.add_subcommand("longpath", "remove short paths and sweep the path length");
  auto* dump_policy = app.add_subcommand("dump-policy", "per-step candidate distributions (greedy walk)");
  auto* dump_traj = app.add_subcommand("dump-trajectories", "sampled trajectories and their rewards");
  for (auto* sub : {preprocess, pretrain, cluster, train, eval, longpath, dump_policy, dump_traj}) add_common(sub, opt);

  eval->add_option("--beam", opt.beam, "beam width (default 50)");
  eval->add_option("--manifest", opt.manifest, "re-run from an eval manifest and check the results match")
      ->check(CLI::ExistingFile);
  for (auto* sub : {eval, dump_policy, dump_traj}) sub->add_option("--out", opt.output, "output file");
  for (auto* sub : {dump_policy, dump_traj}) sub->add_option("--queries", opt.queries, "number of queries");
  dump_traj->add_option("--rollouts", opt.rollouts, "rollouts per query");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*preprocess) cmd_preprocess(opt);
    else if (*pretrain) cmd_pretrain(opt);
    else if (*cluster) cmd_cluster(opt);
    else if (*train) cmd_train(opt);
    else if (*eval) cmd_eval(opt);
    else if (*longpath) cmd_longpath(opt);
    else if (*dump_policy) cmd_dump_policy(opt);
    else if (*dump_traj) cmd_dump_trajectories(opt);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(e.code());
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "error: malformed JSON artifact: {}\n", e.what());
    return static_cast<int>(ExitCode::kArtifact);
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return static_cast<int>(ExitCode::kArtifact);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
