#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pptr/analysis/cost.hpp"
#include "pptr/data/dataset.hpp"
#include "pptr/model/grad_suite.hpp"
#include "pptr/primitives/fit.hpp"
#include "pptr/training/train.hpp"

namespace pptr::cli {

namespace fs = std::filesystem;
using model::PPTrConfig;
using training::SequenceData;

inline constexpr int kManifestVersion = 1;

/// Record of one CLI run, written next to its outputs. The creation time
/// lives here and nowhere else, so every other output is reproducible.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;
  KeyValue config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> artifacts;

  void write(const fs::path& path) const {
    KeyValue kv;
    kv.set_num("format_version", kManifestVersion);
    kv.set("subcommand", subcommand);
    std::string args;
    for (const auto& a : argv) args += (args.empty() ? "" : " ") + a;
    kv.set("argv", args);
    kv.set_num("seed", seed);
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    kv.set("created", stamp);
    for (const auto& [k, v] : artifacts) kv.set("artifact." + k, v);
    for (const auto& [k, v] : config.entries()) kv.set("config." + k, v);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    kv.write(out);
  }
};

/// Manifest path for a file output (`<file>.manifest`) or a directory
/// output (`<dir>/run.manifest`).
inline fs::path manifest_path(const fs::path& out, bool directory) {
  return directory ? out / "run.manifest" : fs::path(out.string() + ".manifest");
}

namespace detail {

inline KeyValue load_config(const std::string& path) {
  if (!fs::exists(path)) throw Error(Errc::IoError, "no such config file: " + path);
  return KeyValue::load(path, Errc::InvalidConfig);
}

inline void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + p.parent_path().string());
  }
}

inline std::ofstream open_file(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  return out;
}

inline KeyValue prefixed(const KeyValue& kv, const std::string& prefix) {
  KeyValue out;
  for (const auto& [k, v] : kv.entries()) out.set(prefix + k, v);
  return out;
}

inline KeyValue unprefixed(const KeyValue& kv, const std::string& prefix) {
  KeyValue out;
  for (const auto& [k, v] : kv.entries())
    if (k.rfind(prefix, 0) == 0) out.set(k.substr(prefix.size()), v);
  return out;
}

inline void merge(KeyValue& into, const KeyValue& from) {
  for (const auto& [k, v] : from.entries()) into.set(k, v);
}

/// Sequences of one split ("train", "eval" or "all") with their fitted
/// primitives.
inline std::vector<SequenceData> load_split(const fs::path& dir, const data::DatasetIndex& index,
                                            const std::string& split) {
  std::vector<SequenceData> out;
  for (const auto& e : index.entries) {
    if (split != "all" && e.split != split) continue;
    data::SequenceFile f = data::read_sequence(dir / e.name);
    if (f.primitives.empty())
      throw Error(Errc::InvalidConfig, e.name + " has no primitives; run fit-primitives first");
    out.push_back({e.name, std::move(f.sequence.frames), std::move(f.primitives), e.action});
  }
  return out;
}

inline void check_classes(const data::DatasetIndex& index, const PPTrConfig& cfg, Task task) {
  if (!index.info.has("num_classes") || index.info.get_or("task", "seg") != to_string(task)) return;
  const auto k = static_cast<std::size_t>(index.info.get_int("num_classes"));
  if (k != cfg.num_classes)
    throw Error(Errc::ConfigMismatch, "dataset has " + std::to_string(k) + " classes, config says " +
                                          std::to_string(cfg.num_classes));
}

inline std::string pool_key(const std::string& name) { return "pool." + name; }

inline std::vector<training::Sample> samples_with_pools(const std::vector<SequenceData>& seqs, const PPTrConfig& cfg,
                                                        Task task, const model::Checkpoint* pools) {
  std::vector<training::Sample> out;
  for (const auto& s : seqs) {
    model::MemoryPool pool;
    if (cfg.memory_length > 0) {
      if (!pools) throw Error(Errc::InvalidConfig, "config has L' > 0; a memory pool file is required");
      if (!pools->has(pool_key(s.name) + ".mask"))
        throw Error(Errc::ConfigMismatch, "memory pool has no entry for " + s.name);
      pool = model::pool_from(*pools, pool_key(s.name));
    }
    out.push_back(training::make_sample(s, cfg, task, std::move(pool)));
  }
  return out;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;
};

// ---- subcommands ---------------------------------------------------------------

inline int gen_data(const std::string& spec_path, const fs::path& out, const Common& c, std::ostream& log) {
  KeyValue kv = load_config(spec_path);
  if (c.seed) kv.set_num("seed", *c.seed);
  const data::DatasetSpec spec = data::dataset_spec_from(kv);
  const data::DatasetIndex index = data::generate_dataset(spec, out, kv);
  RunManifest m{"gen-data", c.argv, kv, spec.scene.seed, {{"dataset", out.string()}}};
  m.write(manifest_path(out, true));
  log << "wrote " << index.entries.size() << " sequences to " << out.string() << '\n';
  return 0;
}

inline int fit_primitives(const fs::path& in, const fs::path& out, primitives::FitConfig fc, const Common& c,
                          std::ostream& log) {
  if (c.seed) fc.seed = *c.seed;
  primitives::validate(fc);
  data::DatasetIndex index = data::read_index(in);
  Rng master(fc.seed);
  std::size_t frames = 0, prims = 0;
  for (const auto& e : index.entries) {
    data::SequenceFile f = data::read_sequence(in / e.name);
    std::vector<primitives::PrimitiveAssignment> fitted;
    for (const auto& frame : f.sequence.frames) {
      primitives::FitConfig frame_cfg = fc;
      frame_cfg.seed = master.fork();
      fitted.push_back(primitives::normalize_to_m(primitives::fit_primitives(frame, frame_cfg), fc.m_target));
      prims += fitted.back().m_actual;
      ++frames;
    }
    data::write_sequence(f.sequence, out / e.name, &fitted);
  }
  KeyValue echo;
  echo.set("method", primitives::to_string(fc.method));
  echo.set_num("m_target", fc.m_target);
  echo.set_num("ransac_threshold", fc.ransac_threshold);
  echo.set_num("ransac_iters", fc.ransac_iters);
  echo.set_num("min_inliers", fc.min_inliers);
  echo.set_num("ransac_cluster_eps", fc.ransac_cluster_eps);
  echo.set_num("rg_angle_threshold", fc.rg_angle_threshold);
  echo.set_num("rg_distance_threshold", fc.rg_distance_threshold);
  echo.set_num("knn_k", fc.knn_k);
  echo.set_num("seed", fc.seed);
  index.info.set("has_primitives", "1");
  merge(index.info, prefixed(echo, "fit."));
  data::write_index(index, out);
  RunManifest m{"fit-primitives", c.argv, echo, fc.seed, {{"input", in.string()}, {"dataset", out.string()}}};
  m.write(manifest_path(out, true));
  log << "fitted " << frames << " frames, mean " << (frames ? static_cast<double>(prims) / frames : 0.0)
      << " primitives per frame\n";
  return 0;
}

struct TrainSetup {
  KeyValue kv;
  PPTrConfig model;
  training::TrainConfig train;
};

inline TrainSetup train_setup(const std::string& cfg_path, const Common& c, std::optional<std::size_t> epochs) {
  TrainSetup s;
  s.kv = load_config(cfg_path);
  if (c.seed) s.kv.set_num("seed", *c.seed);
  if (epochs) s.kv.set_num("epochs", *epochs);
  s.model = model::config_from(s.kv);
  model::validate(s.model);
  s.train = training::train_config_from(s.kv);
  training::validate(s.train);
  return s;
}

inline training::EpochCallback csv_logger(std::ostream& csv, std::ostream& log, const std::string& tag) {
  return [&csv, &log, tag](std::size_t epoch, double loss, const training::Metrics& m) {
    training::write_metrics_row(csv, epoch, loss, m);
    csv.flush();
    log << tag << " epoch " << epoch << " loss " << loss << " acc " << m.accuracy << " miou " << m.miou << '\n';
  };
}

inline int pretrain_extractor(const fs::path& data_dir, const std::string& cfg_path, const fs::path& out,
                              std::optional<std::size_t> epochs, const Common& c, std::ostream& log) {
  TrainSetup s = train_setup(cfg_path, c, epochs);
  if (!epochs && s.kv.has("extractor_epochs"))
    s.train.epochs = static_cast<std::size_t>(s.kv.get_int("extractor_epochs"));
  training::validate(s.train);
  const data::DatasetIndex index = data::read_index(data_dir);
  check_classes(index, s.model, Task::Segmentation);
  auto seqs = load_split(data_dir, index, "train");
  const auto cap = s.kv.get_int("extractor_sequences", 0);
  if (cap < 0) throw Error(Errc::InvalidConfig, "extractor_sequences must be >= 0");
  if (cap > 0 && static_cast<std::size_t>(cap) < seqs.size()) seqs.resize(static_cast<std::size_t>(cap));
  const fs::path csv_path = out.string() + ".metrics.csv";
  auto csv = open_file(csv_path);
  training::write_metrics_header(csv, s.model.num_classes);
  const auto res = training::pretrain_extractor(seqs, s.model, s.train, csv_logger(csv, log, "extractor"));
  KeyValue extra = prefixed(model::to_keyvalue(s.model), "model.");
  extra.set("role", "extractor");
  merge(extra, prefixed(training::to_keyvalue(s.train), "train."));
  ensure_parent(out);
  model::write_checkpoint(model::weights_checkpoint(model::extractor_config(s.model), res.weights, extra), out);
  RunManifest m{"pretrain-extractor", c.argv, s.kv, s.train.seed,
                {{"checkpoint", out.string()}, {"metrics", csv_path.string()}, {"dataset", data_dir.string()}}};
  m.write(manifest_path(out, false));
  return 0;
}

inline int build_mempool(const fs::path& data_dir, const fs::path& ckpt, const fs::path& out, const Common& c,
                         std::ostream& log) {
  const model::Checkpoint ck = model::read_checkpoint(ckpt);
  if (ck.config.get_or("role", "") != "extractor")
    throw Error(Errc::ConfigMismatch, ckpt.string() + " is not an extractor checkpoint");
  const auto [ecfg, extractor] = model::weights_from(ck);
  const PPTrConfig cfg = model::config_from(unprefixed(ck.config, "model."));
  if (model::to_keyvalue(model::extractor_config(cfg)).str() != model::to_keyvalue(ecfg).str())
    throw Error(Errc::ConfigMismatch, "extractor config does not derive from the stored model config");
  const data::DatasetIndex index = data::read_index(data_dir);
  model::Checkpoint pools;
  pools.config = model::to_keyvalue(cfg);
  pools.config.set("role", "memory-pool");
  std::size_t n = 0;
  for (const auto& s : load_split(data_dir, index, "all")) {
    model::add_pool(pools, pool_key(s.name), training::sequence_pool(s, cfg, extractor));
    ++n;
  }
  ensure_parent(out);
  model::write_checkpoint(pools, out);
  RunManifest m{"build-mempool", c.argv, pools.config, cfg.seed,
                {{"pool", out.string()}, {"extractor", ckpt.string()}, {"dataset", data_dir.string()}}};
  m.write(manifest_path(out, false));
  log << "built " << (cfg.memory_length > 0 ? n : 0) << " memory pools of " << cfg.memory_length << " frames\n";
  return 0;
}

inline int train(Task task, const fs::path& data_dir, const std::optional<fs::path>& pool_path,
                 const std::optional<fs::path>& init_path, const std::string& cfg_path, const fs::path& out,
                 std::optional<std::size_t> epochs, const Common& c, std::ostream& log) {
  TrainSetup s = train_setup(cfg_path, c, epochs);
  s.train.task = task;
  const data::DatasetIndex index = data::read_index(data_dir);
  check_classes(index, s.model, task);
  std::optional<model::Checkpoint> pools;
  if (pool_path) pools = model::read_checkpoint(*pool_path);
  std::optional<model::ParameterStore> extractor;
  if (init_path) extractor = model::weights_from(model::read_checkpoint(*init_path)).second;
  const auto train_seqs = load_split(data_dir, index, "train");
  const auto eval_seqs = load_split(data_dir, index, "eval");
  const auto train_set = samples_with_pools(train_seqs, s.model, task, pools ? &*pools : nullptr);
  const auto eval_set = samples_with_pools(eval_seqs, s.model, task, pools ? &*pools : nullptr);
  const fs::path csv_path = out.string() + ".metrics.csv";
  auto csv = open_file(csv_path);
  training::write_metrics_header(csv, s.model.num_classes);
  const auto res = training::train(train_set, eval_set, s.model, s.train,
                                   training::online_init(s.model, extractor ? &*extractor : nullptr),
                                   csv_logger(csv, log, to_string(task)));
  KeyValue extra;
  extra.set("role", "model");
  extra.set("task", to_string(task));
  merge(extra, prefixed(training::to_keyvalue(s.train), "train."));
  model::Checkpoint ck = model::weights_checkpoint(s.model, res.weights, extra);
  for (const auto& x : train_set) model::add_pool(ck, pool_key(x.name), x.pool);
  for (const auto& x : eval_set) model::add_pool(ck, pool_key(x.name), x.pool);
  ensure_parent(out);
  model::write_checkpoint(ck, out);
  RunManifest m{"train", c.argv, s.kv, s.train.seed, {{"checkpoint", out.string()}, {"metrics", csv_path.string()}}};
  if (pool_path) m.artifacts.emplace_back("pool", pool_path->string());
  if (init_path) m.artifacts.emplace_back("init", init_path->string());
  m.write(manifest_path(out, false));
  return 0;
}

inline int eval(const fs::path& ckpt, const fs::path& data_dir, const std::string& split,
                const std::optional<fs::path>& out, const Common& c, std::ostream& stdout_) {
  const model::Checkpoint ck = model::read_checkpoint(ckpt);
  if (ck.config.get_or("role", "") != "model") throw Error(Errc::ConfigMismatch, ckpt.string() + " is not a trained model");
  const auto [cfg, w] = model::weights_from(ck);
  const Task task = parse_task(ck.config.get("task"));
  const data::DatasetIndex index = data::read_index(data_dir);
  const auto seqs = load_split(data_dir, index, split);
  if (seqs.empty()) throw Error(Errc::InvalidConfig, "split '" + split + "' is empty");
  const auto samples = samples_with_pools(seqs, cfg, task, &ck);
  const training::Metrics m = training::evaluate(samples, w, cfg, task);
  const training::Metrics b = training::baseline_metrics(samples, load_split(data_dir, index, "train"), task, cfg.num_classes);
  std::ostringstream csv;
  auto num = [](double v) { return std::isnan(v) ? std::string("nan") : data::format_double(v); };
  csv << "split,task,samples,acc,miou";
  for (std::size_t k = 0; k < cfg.num_classes; ++k) csv << ",iou_" << k;
  csv << ",baseline_acc,baseline_miou\n";
  csv << split << ',' << to_string(task) << ',' << samples.size() << ',' << num(m.accuracy) << ',' << num(m.miou);
  for (double v : m.iou) csv << ',' << num(v);
  csv << ',' << num(b.accuracy) << ',' << num(b.miou) << '\n';
  stdout_ << csv.str();
  if (out) {
    open_file(*out) << csv.str();
    KeyValue echo = model::to_keyvalue(cfg);
    echo.set("task", to_string(task));
    RunManifest mf{"eval", c.argv, echo, cfg.seed, {{"metrics", out->string()}, {"checkpoint", ckpt.string()}}};
    mf.write(manifest_path(*out, false));
  }
  return 0;
}

inline int cost_report(std::uint64_t n, std::uint64_t m, std::uint64_t lmem, const std::string& lrange,
                       const std::optional<std::string>& cfg_path, const std::optional<fs::path>& out, const Common& c,
                       std::ostream& stdout_) {
  PPTrConfig cfg;
  KeyValue kv;
  if (cfg_path) {
    kv = load_config(*cfg_path);
    cfg = model::config_from(kv);
  }
  const auto Ls = analysis::parse_range(lrange);
  std::ostringstream csv;
  analysis::write_csv(analysis::cost_sweep(n, m, lmem, Ls, cfg), csv);
  stdout_ << csv.str();
  if (out) {
    open_file(*out) << csv.str();
    kv.set_num("n", n);
    kv.set_num("m", m);
    kv.set_num("lmem", lmem);
    kv.set("lrange", lrange);
    RunManifest mf{"cost-report", c.argv, kv, c.seed.value_or(0), {{"report", out->string()}}};
    mf.write(manifest_path(*out, false));
  }
  return 0;
}

inline constexpr double kGradExitTolerance = 1e-4;
inline constexpr int kGradCheckFailed = 3;

inline int grad_check(const std::optional<std::string>& cfg_path, const std::optional<fs::path>& out,
                      std::size_t instances, const Common& c, std::ostream& stdout_) {
  PPTrConfig cfg;
  KeyValue kv;
  if (cfg_path) {
    kv = load_config(*cfg_path);
    cfg = model::config_from(kv);
  }
  model::validate(cfg);
  model::GradSuiteOptions o;
  o.first_seed = c.seed.value_or(1);
  o.max_instances = instances;
  if (kv.has("grad_points_per_frame")) o.points_per_frame = static_cast<std::size_t>(kv.get_int("grad_points_per_frame"));
  std::ostringstream csv;
  csv << "block,max_rel_error,tolerance,instance_seed,rejected,coords,status\n";
  bool ok = true;
  for (const auto& block : model::grad_blocks(cfg)) {
    const model::GradCase g = model::run_grad_case(block, cfg, o);
    const bool exit_ok = g.checked && g.max_rel_error <= kGradExitTolerance;
    ok = ok && exit_ok;
    csv << block << ',' << (g.checked ? data::format_double(g.max_rel_error) : "nan") << ','
        << data::format_double(g.tolerance) << ',' << g.seed << ',' << g.rejected << ',' << g.coords << ','
        << (!g.checked ? "no-admissible-instance" : g.pass() ? "pass" : "fail") << '\n';
  }
  stdout_ << csv.str();
  if (out) {
    open_file(*out) << csv.str();
    RunManifest mf{"grad-check", c.argv, model::to_keyvalue(cfg), o.first_seed, {{"report", out->string()}}};
    mf.write(manifest_path(*out, false));
  }
  return ok ? 0 : kGradCheckFailed;
}

inline std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

}  // namespace detail

inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

/// Entry point shared by the executable and the tests. `args[0]` is the
/// program name. Errors go to `err` as one line, `error: <code>: <detail>`.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Primitive point transformer toolkit"};
  app.require_subcommand(1);
  detail::Common common;
  for (std::size_t i = 1; i < args.size(); ++i) common.argv.push_back(args[i]);
  std::optional<std::uint64_t> seed;

  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "Seed overriding the config/spec seed"); };

  std::string spec_path, out_dir, in_dir, data_dir, cfg_path, ckpt, out_file, method = "ransac", task_name, lrange,
      split = "eval";
  std::optional<std::string> opt_cfg, opt_out, pool_path, init_path;
  std::optional<std::size_t> epochs;
  primitives::FitConfig fc;
  std::uint64_t n = 0, m = 0, lmem = 0;
  std::size_t instances = 30;

  auto* gen = app.add_subcommand("gen-data", "Generate synthetic sequences");
  gen->add_option("--spec", spec_path, "Dataset spec (key=value)")->required();
  gen->add_option("--out", out_dir, "Output dataset directory")->required();
  add_seed(gen);

  auto* fit = app.add_subcommand("fit-primitives", "Fit plane primitives to every frame");
  fit->add_option("--in", in_dir, "Input dataset directory")->required();
  fit->add_option("--method", method, "ransac | region-grow | kmeans")
      ->check(CLI::IsMember({"ransac", "region-grow", "kmeans"}));
  fit->add_option("--m", fc.m_target, "Primitive count M")->required()->check(CLI::Range(1, 1 << 20));
  fit->add_option("--threshold", fc.ransac_threshold, "RANSAC inlier distance");
  fit->add_option("--iters", fc.ransac_iters, "RANSAC hypotheses per plane");
  fit->add_option("--min-inliers", fc.min_inliers, "Smallest accepted primitive");
  fit->add_option("--cluster-eps", fc.ransac_cluster_eps, "RANSAC connectivity radius (<0 auto, 0 off)");
  fit->add_option("--angle", fc.rg_angle_threshold, "Region-grow normal angle (degrees)");
  fit->add_option("--distance", fc.rg_distance_threshold, "Region-grow plane distance");
  fit->add_option("--knn", fc.knn_k, "Neighbours for normal estimation");
  fit->add_option("--out", out_dir, "Output dataset directory")->required();
  add_seed(fit);

  auto* pre = app.add_subcommand("pretrain-extractor", "Train the single-frame extractor");
  pre->add_option("--data", data_dir, "Dataset with primitives")->required();
  pre->add_option("--cfg", cfg_path, "Model/training config")->required();
  pre->add_option("--out", out_file, "Checkpoint path")->required();
  pre->add_option("--epochs", epochs, "Override the epoch count");
  add_seed(pre);

  auto* pool = app.add_subcommand("build-mempool", "Run the frozen extractor to fill memory pools");
  pool->add_option("--data", data_dir, "Dataset with primitives")->required();
  pool->add_option("--ckpt", ckpt, "Extractor checkpoint")->required();
  pool->add_option("--out", out_file, "Pool file")->required();
  add_seed(pool);

  auto* tr = app.add_subcommand("train", "Train the online model");
  tr->add_option("--task", task_name, "seg | cls")->required()->check(CLI::IsMember({"seg", "cls"}));
  tr->add_option("--data", data_dir, "Dataset with primitives")->required();
  tr->add_option("--pool", pool_path, "Memory pool file (needed when L' > 0)");
  tr->add_option("--init", init_path, "Extractor checkpoint to initialise shared weights from");
  tr->add_option("--cfg", cfg_path, "Model/training config")->required();
  tr->add_option("--out", out_file, "Checkpoint path")->required();
  tr->add_option("--epochs", epochs, "Override the epoch count");
  add_seed(tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a trained model");
  ev->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset with primitives")->required();
  ev->add_option("--split", split, "eval | train | all")->check(CLI::IsMember({"eval", "train", "all"}));
  ev->add_option("--out", opt_out, "Also write the CSV here");
  add_seed(ev);

  auto* cost = app.add_subcommand("cost-report", "Attention cost of flat versus hierarchical attention");
  cost->add_option("--n", n, "Points per frame N")->required();
  cost->add_option("--m", m, "Primitives per frame M")->required();
  cost->add_option("--lmem", lmem, "Memory frames L'")->required();
  cost->add_option("--lrange", lrange, "Clip lengths, a..b")->required();
  cost->add_option("--cfg", opt_cfg, "Model config for the activation proxy");
  cost->add_option("--out", opt_out, "Also write the CSV here");
  add_seed(cost);

  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of every block");
  grad->add_option("--cfg", opt_cfg, "Model config");
  grad->add_option("--out", opt_out, "Also write the CSV here");
  grad->add_option("--instances", instances, "Instances scanned per block")->check(CLI::Range(1, 10000));
  add_seed(grad);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: UsageError: " << detail::one_line(e.what()) << '\n';
    return kExitUsage;
  }
  common.seed = seed;

  try {
    std::ostringstream log;
    std::ostream& info = err;
    int code = 0;
    if (gen->parsed()) {
      code = detail::gen_data(spec_path, out_dir, common, info);
    } else if (fit->parsed()) {
      fc.method = primitives::parse_fit_method(method);
      code = detail::fit_primitives(in_dir, out_dir, fc, common, info);
    } else if (pre->parsed()) {
      code = detail::pretrain_extractor(data_dir, cfg_path, out_file, epochs, common, info);
    } else if (pool->parsed()) {
      code = detail::build_mempool(data_dir, ckpt, out_file, common, info);
    } else if (tr->parsed()) {
      std::optional<fs::path> p, i;
      if (pool_path) p = *pool_path;
      if (init_path) i = *init_path;
      code = detail::train(parse_task(task_name), data_dir, p, i, cfg_path, out_file, epochs, common, info);
    } else if (ev->parsed()) {
      std::optional<fs::path> o;
      if (opt_out) o = *opt_out;
      code = detail::eval(ckpt, data_dir, split, o, common, out);
    } else if (cost->parsed()) {
      std::optional<fs::path> o;
      if (opt_out) o = *opt_out;
      code = detail::cost_report(n, m, lmem, lrange, opt_cfg, o, common, out);
    } else if (grad->parsed()) {
      std::optional<fs::path> o;
      if (opt_out) o = *opt_out;
      code = detail::grad_check(opt_cfg, o, instances, common, out);
    }
    return code;
  } catch (const Error& e) {
    err << "error: " << errc_name(e.code()) << ": " << detail::one_line(e.what()) << '\n';
    return e.code() == Errc::UsageError ? kExitUsage : kExitError;
  } catch (const std::exception& e) {
    err << "error: IoError: " << detail::one_line(e.what()) << '\n';
    return kExitError;
  }
}

}  // namespace pptr::cli
