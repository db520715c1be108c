// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is 0 only when all selected criteria pass.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>

#include "pptr/analysis/cost.hpp"
#include "pptr/cli/app.hpp"
#include "pptr/data/dataset.hpp"
#include "pptr/model/grad_suite.hpp"
#include "pptr/primitives/fit.hpp"
#include "pptr/training/train.hpp"
#include "support/fixtures.hpp"
#include "support/recovery.hpp"

using namespace pptr;
using namespace pptr::model;
using ad::Tensor;
using ad::Var;
using geometry::Vec3;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kBlockGradTol = 1e-5;
constexpr double kFullGradTol = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr int kOracleCases = 100;
constexpr double kOracleTol = 1e-12;
constexpr int kInvariantCases = 50;
constexpr double kPermutationTol = 1e-12;
constexpr int kPlantedScenes = 20;
constexpr double kPointRate = 0.99;
constexpr double kNormalDeg = 1.0;
constexpr double kPlaneRate = 0.95;
constexpr double kPlantedSeconds = 60.0;
constexpr std::uint64_t kCostN = 1024;
constexpr double kToyAccuracy = 0.95;
constexpr std::size_t kToyMaxEpochs = 50;
constexpr double kToySeconds = 15 * 60.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

PPTrConfig tiny_config() {
  PPTrConfig c;
  c.feature_dim = c.conv_dim = c.key_dim = c.value_dim = 8;
  c.ffn_dim = c.head_dim = 16;
  c.spatial_radius = 0.35;
  c.m_target = 4;
  c.clip_length = 3;
  c.num_classes = 3;
  c.seed = 11;
  return c;
}

// ---- 1. gradients -----------------------------------------------------------------

Verdict gradients() {
  PPTrConfig c = tiny_config();
  c.spatial_radius = 0.2;
  c.memory_length = 2;
  c.use_normals = true;
  GradSuiteOptions o;
  o.max_instances = 30;
  o.points_per_frame = 64;
  const auto t0 = std::chrono::steady_clock::now();
  double worst_block = 0.0, worst_full = 0.0;
  bool ok = true;
  std::string failed;
  for (const auto& b : grad_blocks(c)) {
    const GradCase g = run_grad_case(b, c, o);
    const bool full = b.rfind("pptr_", 0) == 0;
    const double tol = full ? kFullGradTol : kBlockGradTol;
    if (!g.checked || !(g.max_rel_error < tol)) {
      ok = false;
      failed += " " + b;
    }
    (full ? worst_full : worst_block) = std::max(full ? worst_full : worst_block, g.max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < kGradSeconds,
          fmt("blocks max %.2e (<%.0e), full PPTr max %.2e (<%.0e), %.1fs (<%.0fs)%s", worst_block, kBlockGradTol,
              worst_full, kFullGradTol, secs, kGradSeconds, failed.empty() ? "" : (" failing:" + failed).c_str())};
}

// ---- 2. oracle equivalence ------------------------------------------------------------

double conv_oracle(Rng& rng) {
  PPTrConfig c = tiny_config();
  c.temporal_radius = rng.index(3);
  c.spatial_radius = rng.uniform(0.2, 0.6);
  const std::size_t cin = 1 + rng.index(4), cout = 1 + rng.index(6);
  const auto s = fixture::random_sample(rng, 3, 16, 0.5, c.m_target);
  const Clip clip = prepare_clip(s.frames, s.prims, c);
  const Tensor feats = fixture::random_matrix(rng, clip.points(), cin);
  const Tensor wd = fixture::random_matrix(rng, cout, 4), wf = fixture::random_matrix(rng, cout, cin);
  ad::Tape tape(false);
  const Tensor out =
      point4d_conv(tape.constant(feats), tape.constant(wd), tape.constant(wf), clip.graph).value();
  const auto ref = oracle::conv4d(fixture::positions(s), fixture::frame_rows(feats, clip), oracle::to_mat(wd),
                                  oracle::to_mat(wf), c.spatial_radius, static_cast<long>(c.temporal_radius));
  double worst = 0.0;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t i = 0; i < clip.frame_points(t); ++i)
      for (std::size_t ch = 0; ch < cout; ++ch)
        worst = std::max(worst, std::abs(ref[t][i][ch] - out(clip.offset[t] + i, ch)));
  return worst;
}

double attention_oracle(Rng& rng) {
  const PPTrConfig c = tiny_config();
  const auto s = fixture::random_sample(rng, 3, 6 + rng.index(20), 1.0, c.m_target);
  const Clip clip = prepare_clip(s.frames, s.prims, c);
  const ParameterStore w = fixture::random_store(c, rng);
  const Tensor x = fixture::random_matrix(rng, clip.points(), c.feature_dim);
  ad::Tape tape(false);
  const BoundWeights bw(tape, w, false);
  const Tensor attn = intra_primitive_attention(tape.constant(x), clip, bw, "intra.0").value();
  const Tensor blk = intra_primitive_block(tape.constant(x), clip, bw, "intra.0").value();
  const auto bwts = fixture::block_weights(w, "intra.0");
  double worst = 0.0;
  std::size_t covered = 0;
  for (const auto& g : clip.groups) {
    oracle::Mat xs;
    for (std::size_t r : g) xs.emplace_back(x.row(r).begin(), x.row(r).end());
    const std::vector<bool> all(g.size(), true);
    const auto ra = oracle::attention(xs, all, bwts.wq, bwts.wk, bwts.wv);
    const auto rb = oracle::block(xs, all, bwts);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t ch = 0; ch < c.feature_dim; ++ch)
        worst = std::max({worst, std::abs(ra[i][ch] - attn(g[i], ch)), std::abs(rb[i][ch] - blk(g[i], ch))});
    covered += g.size();
  }
  return covered == clip.points() ? worst : INFINITY;
}

double pool_oracle(Rng& rng) {
  const std::size_t rows = 1 + rng.index(40), cols = 1 + rng.index(6), groups = 1 + rng.index(std::min<std::size_t>(rows, 8));
  std::vector<std::size_t> ids(rows);
  for (std::size_t r = 0; r < rows; ++r) ids[r] = r < groups ? r : rng.index(groups);
  for (std::size_t i = rows; i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);
  const Tensor x = fixture::random_matrix(rng, rows, cols);
  ad::Tape tape(false);
  const Tensor out = ad::group_max_pool(tape.constant(x), ad::GroupSpec(ids, groups)).value();
  double worst = 0.0;
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t ch = 0; ch < cols; ++ch) {
      double best = -INFINITY;
      for (std::size_t r = 0; r < rows; ++r)
        if (ids[r] == g) best = std::max(best, x(r, ch));
      worst = std::max(worst, std::abs(best - out(g, ch)));
    }
  return worst;
}

double transformer_oracle(Rng& rng, int inst) {
  PPTrConfig c = tiny_config();
  c.primitive_blocks = 1 + static_cast<std::size_t>(inst % 2);
  const ParameterStore w = fixture::random_store(c, rng);
  const std::size_t clip_slots = 2 + rng.index(10), pool_slots = inst % 3 == 0 ? 0 : 1 + rng.index(12);
  Tensor cv = fixture::random_matrix(rng, clip_slots, c.feature_dim);
  std::vector<bool> cm;
  for (std::size_t s = 0; s < clip_slots; ++s) cm.push_back(s == 0 || rng.uniform() < 0.6);
  MemoryPool pool;
  if (pool_slots) {
    pool.values = fixture::random_matrix(rng, pool_slots, c.feature_dim);
    for (std::size_t s = 0; s < pool_slots; ++s) pool.mask.push_back(rng.uniform() < 0.6);
  }
  ad::Tape tape(false);
  const BoundWeights bw(tape, w, false);
  const Tensor out = primitive_transformer({tape.constant(cv), cm}, pool, bw, c.primitive_blocks).values.value();
  oracle::Mat x = oracle::to_mat(cv);
  std::vector<bool> mask = cm;
  if (!pool.empty()) {
    for (const auto& r : oracle::to_mat(pool.values)) x.push_back(r);
    mask.insert(mask.end(), pool.mask.begin(), pool.mask.end());
  }
  for (std::size_t b = 0; b < c.primitive_blocks; ++b)
    x = oracle::block(x, mask, fixture::block_weights(w, "prim." + std::to_string(b)));
  double worst = 0.0;
  for (std::size_t s = 0; s < clip_slots; ++s)
    for (std::size_t ch = 0; ch < c.feature_dim; ++ch)
      worst = std::max(worst, std::abs((cm[s] ? x[s][ch] : 0.0) - out(s, ch)));
  return worst;
}

Verdict oracles() {
  Rng rng(2024);
  double conv = 0, attn = 0, pool = 0, prim = 0;
  for (int i = 0; i < kOracleCases; ++i) {
    conv = std::max(conv, conv_oracle(rng));
    attn = std::max(attn, attention_oracle(rng));
    pool = std::max(pool, pool_oracle(rng));
    prim = std::max(prim, transformer_oracle(rng, i));
  }
  const bool ok = conv < kOracleTol && attn < kOracleTol && pool < kOracleTol && prim < kOracleTol;
  return {ok, fmt("%d cases each; max |diff| conv4d %.1e, intra attention %.1e, group max pool %.1e, primitive "
                  "transformer %.1e (<%.0e)",
                  kOracleCases, conv, attn, pool, prim, kOracleTol)};
}

// ---- 3. invariants --------------------------------------------------------------------

Tensor forward_logits(const fixture::Sample& s, const MemoryPool& pool, const ParameterStore& w, const PPTrConfig& c,
                      Task task) {
  const Clip clip = prepare_clip(s.frames, s.prims, c);
  ad::Tape tape(false);
  const BoundWeights bw(tape, w, false);
  return pptr_forward(clip, pool, bw, c, task).logits.value();
}

bool group_independence(Rng& rng) {
  const PPTrConfig c = tiny_config();
  const std::size_t n = 12 + rng.index(20);
  auto s = fixture::random_sample(rng, 3, n, 1.0, c.m_target);
  const Clip clip = prepare_clip(s.frames, s.prims, c);
  const ParameterStore w = fixture::random_store(c, rng);
  const Tensor x = fixture::random_matrix(rng, clip.points(), c.feature_dim);
  const std::size_t g = rng.index(clip.groups.size());
  std::vector<bool> touched(clip.points(), false);
  Tensor y = x;
  for (std::size_t r : clip.groups[g]) {
    touched[r] = true;
    for (double& v : y.row(r)) v += rng.uniform(-2.0, 2.0);
  }
  auto run = [&](const Tensor& in) {
    ad::Tape tape(false);
    const BoundWeights bw(tape, w, false);
    return intra_primitive_block(tape.constant(in), clip, bw, "intra.0").value();
  };
  const Tensor a = run(x), b = run(y);
  for (std::size_t r = 0; r < clip.points(); ++r)
    if (!touched[r])
      for (std::size_t ch = 0; ch < c.feature_dim; ++ch)
        if (a(r, ch) != b(r, ch)) return false;
  return true;
}

bool masked_neutrality(Rng& rng) {
  PPTrConfig c = tiny_config();
  c.memory_length = 1 + rng.index(3);
  const auto s = fixture::random_sample(rng, 3, 10 + rng.index(20), 0.6, c.m_target);
  const ParameterStore w = fixture::random_store(c, rng);
  MemoryPool pool;
  const std::size_t slots = c.memory_length * c.m_target;
  pool.values = fixture::random_matrix(rng, slots, c.feature_dim);
  for (std::size_t i = 0; i < slots; ++i) pool.mask.push_back(i == 0 || rng.uniform() < 0.5);
  MemoryPool junk = pool;
  for (std::size_t i = 0; i < slots; ++i)
    if (!pool.mask[i])
      for (double& v : junk.values.row(i)) v = rng.uniform(-1e6, 1e6);
  for (Task t : {Task::Segmentation, Task::Classification})
    if (forward_logits(s, pool, w, c, t) != forward_logits(s, junk, w, c, t)) return false;
  // padding clip tokens are never read either
  Tensor cv = fixture::random_matrix(rng, 6, c.feature_dim);
  const std::vector<bool> cm = {true, false, true, false, false, true};
  Tensor cj = cv;
  for (std::size_t sl : {1u, 3u, 4u})
    for (double& v : cj.row(sl)) v = rng.uniform(-1e6, 1e6);
  ad::Tape tape(false);
  const BoundWeights bw(tape, w, false);
  const Tensor a = primitive_transformer({tape.constant(cv), cm}, pool, bw, 1).values.value();
  const Tensor b = primitive_transformer({tape.constant(cj), cm}, pool, bw, 1).values.value();
  return a == b;
}

bool translation_invariance(Rng& rng) {
  PPTrConfig c = tiny_config();
  c.memory_length = 2;
  const PPTrConfig ec = extractor_config(c);
  // Coordinates and offsets on a 1/1024 grid keep every difference exact.
  const auto s = fixture::random_sample(rng, 3, 10 + rng.index(30), 0.6, c.m_target, true);
  const Vec3 shift = (Vec3(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)) * 1024.0)
                         .array()
                         .round() /
                     1024.0;
  auto moved = s;
  for (auto& f : moved.frames)
    for (auto& p : f.positions) p += shift;
  const ParameterStore w = fixture::random_store(c, rng), ew = fixture::random_store(ec, rng);
  const MemoryPool pa = build_memory_pool(s.frames, s.prims, ew, ec, c);
  const MemoryPool pb = build_memory_pool(moved.frames, moved.prims, ew, ec, c);
  if (pa.values != pb.values) return false;
  for (Task t : {Task::Segmentation, Task::Classification})
    if (forward_logits(s, pa, w, c, t) != forward_logits(moved, pb, w, c, t)) return false;
  return true;
}

double permutation_invariance(Rng& rng) {
  const PPTrConfig c = tiny_config();
  const std::size_t n = 10 + rng.index(25);
  const auto s = fixture::random_sample(rng, 3, n, 0.6, c.m_target);
  const ParameterStore w = fixture::random_store(c, rng);
  // Shuffle the points of every frame only among points of the same primitive.
  auto p = s;
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t id = 0; id <= s.prims[t].m_actual; ++id) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < n; ++i)
        if (s.prims[t].labels[i] == static_cast<int>(id)) rows.push_back(i);
      std::vector<std::size_t> perm = rows;
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
      for (std::size_t k = 0; k < rows.size(); ++k) p.frames[t].positions[rows[k]] = s.frames[t].positions[perm[k]];
    }
  }
  auto tokens = [&](const fixture::Sample& x) {
    const Clip clip = prepare_clip(x.frames, x.prims, c);
    ad::Tape tape(false);
    const BoundWeights bw(tape, w, false);
    const ForwardTrace tr = pptr_forward(clip, {}, bw, c, Task::Classification);
    return std::pair(tr.tokens.values.value(), tr.tokens_out.values.value());
  };
  const auto [a0, a1] = tokens(s);
  const auto [b0, b1] = tokens(p);
  double worst = 0.0;
  for (std::size_t i = 0; i < a0.size(); ++i)
    worst = std::max({worst, std::abs(a0[i] - b0[i]), std::abs(a1[i] - b1[i])});
  return worst;
}

Verdict invariants() {
  Rng rng(77);
  int indep = 0, neutral = 0, translation = 0;
  double perm = 0.0;
  for (int i = 0; i < kInvariantCases; ++i) {
    indep += group_independence(rng);
    neutral += masked_neutrality(rng);
    translation += translation_invariance(rng);
    perm = std::max(perm, permutation_invariance(rng));
  }
  const int n = kInvariantCases;
  const bool ok = indep == n && neutral == n && translation == n && perm < kPermutationTol;
  return {ok, fmt("%d cases each; group independence %d/%d bitwise, masked-token neutrality %d/%d bitwise, "
                  "translation %d/%d bitwise, within-primitive permutation max token diff %.1e (<%.0e)",
                  n, indep, n, neutral, n, translation, n, perm, kPermutationTol)};
}

// ---- 4. planted planes ------------------------------------------------------------------

Verdict planted_planes() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (auto method : {primitives::FitMethod::Ransac, primitives::FitMethod::RegionGrow}) {
    double worst_points = 1.0;
    std::size_t planes = 0, good = 0;
    for (int s = 0; s < kPlantedScenes; ++s) {
      data::SceneSpec spec;
      spec.num_patches = 2 + static_cast<std::size_t>(s % 4);
      spec.points_per_patch = 300 + 700 * static_cast<std::size_t>(s % 5) / 4;
      spec.noise_sigma = 0.01;
      spec.seed = 1000 + static_cast<std::uint64_t>(s);
      const auto g = data::generate(spec);
      primitives::FitConfig fc;
      fc.method = method;
      fc.ransac_threshold = 0.035;
      fc.rg_angle_threshold = 30.0;
      fc.rg_distance_threshold = 0.04;
      fc.knn_k = 16;
      fc.min_inliers = 30;
      fc.seed = static_cast<std::uint64_t>(s);
      const auto r = oracle::score_recovery(g.truth[0], primitives::fit_primitives(g.sequence.frames[0], fc), kNormalDeg);
      worst_points = std::min(worst_points, r.point_rate());
      planes += r.planes;
      good += r.planes_within_tolerance;
    }
    const double plane_rate = static_cast<double>(good) / static_cast<double>(planes);
    ok = ok && worst_points >= kPointRate && plane_rate >= kPlaneRate;
    detail += fmt("%s: worst scene point rate %.4f (>=%.2f), normals within %.0f deg %zu/%zu (>=%.0f%%); ",
                  primitives::to_string(method).c_str(), worst_points, kPointRate, kNormalDeg, good, planes,
                  100 * kPlaneRate);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < kPlantedSeconds, detail + fmt("%d scenes, %.1fs (<%.0fs)", kPlantedScenes, secs, kPlantedSeconds)};
}

// ---- 5. cost model -------------------------------------------------------------------

Verdict cost_claim() {
  // M = 200 at 16384 points per frame, scaled to 1024 points, and unscaled.
  const std::vector<std::uint64_t> Ms = {4, 200 * kCostN / 16384, 200};
  std::vector<std::uint64_t> Ls(63);
  std::iota(Ls.begin(), Ls.end(), 2);
  std::size_t rows = 0, cheaper = 0, exact = 0;
  for (std::uint64_t M : Ms)
    for (std::uint64_t mem : {0, 6}) {
      const auto one = analysis::cost_row(1, kCostN, M, mem, {});
      for (const auto& r : analysis::cost_sweep(kCostN, M, mem, Ls).rows) {
        ++rows;
        cheaper += r.hier_total < r.flat_interactions;
        exact += r.flat_interactions == r.L * r.L * one.flat_interactions &&
                 r.hier_intra_interactions == r.L * one.hier_intra_interactions;
      }
    }
  return {cheaper == rows && exact == rows,
          fmt("N=%llu, M in {4, %llu, 200}, L'=0/6, L=2..64: hier < flat on %zu/%zu rows; flat = L^2 flat(1) and "
              "intra = L intra(1) exactly on %zu/%zu",
              static_cast<unsigned long long>(kCostN), static_cast<unsigned long long>(Ms[1]), cheaper, rows, exact,
              rows)};
}

// ---- 6. toy task ---------------------------------------------------------------------

struct ToyRun {
  training::TrainResult result;
  training::Metrics occluded;
  std::vector<training::Sample> eval;
};

Verdict toy_task(const std::string& config_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const KeyValue kv = KeyValue::load(config_dir + "/toy_seg.cfg");
  const data::DatasetSpec d = data::dataset_spec_from(kv);
  PPTrConfig cfg = config_from(kv);
  training::TrainConfig tc = training::train_config_from(kv);
  tc.epochs = std::min(tc.epochs, kToyMaxEpochs);

  // Same generation and fitting as gen-data followed by fit-primitives.
  primitives::FitConfig fc;
  fc.method = primitives::FitMethod::Ransac;
  fc.m_target = cfg.m_target;
  fc.ransac_threshold = 0.05;
  fc.min_inliers = 30;
  Rng master(d.scene.seed), fit_rng(fc.seed);
  std::vector<training::SequenceData> train_seqs, eval_seqs;
  std::vector<bool> occluded;
  for (std::size_t i = 0; i < d.num_train + d.num_eval; ++i) {
    bool occ = false;
    const auto g = data::generate(data::sequence_spec(d, i, master.next(), occ));
    training::SequenceData s{data::sequence_name(i), g.sequence.frames, {}, g.action_class};
    for (const auto& f : s.frames) {
      primitives::FitConfig frame_cfg = fc;
      frame_cfg.seed = fit_rng.fork();
      s.prims.push_back(primitives::normalize_to_m(primitives::fit_primitives(f, frame_cfg), fc.m_target));
    }
    if (i < d.num_train) {
      train_seqs.push_back(std::move(s));
    } else {
      eval_seqs.push_back(std::move(s));
      occluded.push_back(occ);
    }
  }

  training::TrainConfig etc = tc;
  etc.epochs = static_cast<std::size_t>(kv.get_int("extractor_epochs", 3));
  const auto ex_n = std::min<std::size_t>(train_seqs.size(), static_cast<std::size_t>(kv.get_int("extractor_sequences", 0)));
  const auto extractor = training::pretrain_extractor(
      std::span(train_seqs).first(ex_n ? ex_n : train_seqs.size()), cfg, etc);
  std::fprintf(stderr, "  extractor trained (%.0fs)\n", seconds_since(t0));

  auto run = [&](std::size_t memory) {
    PPTrConfig c = cfg;
    c.memory_length = memory;
    ToyRun r;
    std::vector<training::Sample> tr, occ;
    for (const auto& s : train_seqs) tr.push_back(training::make_sample(s, c, Task::Segmentation, &extractor.weights));
    for (std::size_t i = 0; i < eval_seqs.size(); ++i) {
      r.eval.push_back(training::make_sample(eval_seqs[i], c, Task::Segmentation, &extractor.weights));
      if (occluded[i]) occ.push_back(r.eval.back());
    }
    r.result = training::train(tr, r.eval, c, tc, training::online_init(c, &extractor.weights),
                                [&](std::size_t e, double loss, const training::Metrics& m) {
                                  std::fprintf(stderr, "  L'=%zu epoch %zu loss %.4f acc %.4f miou %.4f (%.0fs)\n",
                                               memory, e, loss, m.accuracy, m.miou, seconds_since(t0));
                                });
    r.occluded = training::evaluate(occ, r.result.weights, c, Task::Segmentation);
    return r;
  };
  const ToyRun full = run(cfg.memory_length), flat = run(0);
  const training::Metrics base = training::baseline_metrics(full.eval, train_seqs, Task::Segmentation, cfg.num_classes);
  const double secs = seconds_since(t0);

  const double acc = full.result.metrics.accuracy;
  const bool a = acc >= kToyAccuracy;
  const bool b = base.miou < full.result.metrics.miou;
  const bool c = full.occluded.miou >= flat.occluded.miou;
  return {a && b && c && secs < kToySeconds,
          fmt("(a) L'=%zu eval accuracy %.4f after %zu epochs (>=%.2f) %s; (b) majority-vote baseline mIoU %.4f < "
              "model %.4f %s; (c) occluded eval mIoU L'=%zu %.4f >= L'=0 %.4f %s; %.0fs (<%.0fs)",
              cfg.memory_length, acc, tc.epochs, kToyAccuracy, a ? "ok" : "FAIL", base.miou,
              full.result.metrics.miou, b ? "ok" : "FAIL", cfg.memory_length, full.occluded.miou, flat.occluded.miou,
              c ? "ok" : "FAIL", secs, kToySeconds)};
}

// ---- 7. determinism --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict determinism(const std::string& config_dir) {
  const std::string cfg = config_dir + "/pipeline_small.cfg";
  const fs::path root = fs::temp_directory_path() / ("pptr_acceptance_" + std::to_string(::getpid()));
  std::vector<fs::path> dirs = {root / "a", root / "b"};
  std::ostringstream sink;
  for (const auto& d : dirs) {
    fs::remove_all(d);
    auto p = [&](const char* f) { return (d / f).string(); };
    const std::vector<std::vector<std::string>> steps = {
        {"gen-data", "--spec", cfg, "--out", p("data")},
        {"fit-primitives", "--in", p("data"), "--m", "4", "--min-inliers", "10", "--out", p("fit")},
        {"pretrain-extractor", "--data", p("fit"), "--cfg", cfg, "--out", p("ext.ckpt")},
        {"build-mempool", "--data", p("fit"), "--ckpt", p("ext.ckpt"), "--out", p("pool.ckpt")},
        {"train", "--task", "seg", "--data", p("fit"), "--pool", p("pool.ckpt"), "--init", p("ext.ckpt"), "--cfg",
         cfg, "--out", p("model.ckpt")},
        {"eval", "--ckpt", p("model.ckpt"), "--data", p("fit"), "--out", p("eval.csv")}};
    for (auto args : steps) {
      args.insert(args.begin(), "pptr");
      if (cli::run(args, sink, sink) != 0) return {false, "pipeline step " + args[1] + " failed: " + sink.str()};
    }
  }
  std::size_t same = 0;
  const std::vector<std::string> files = {"ext.ckpt",  "pool.ckpt",          "model.ckpt", "ext.ckpt.metrics.csv",
                                          "model.ckpt.metrics.csv", "eval.csv"};
  std::string differing;
  for (const auto& f : files) {
    const std::string a = slurp(dirs[0] / f), b = slurp(dirs[1] / f);
    if (!a.empty() && a == b) ++same;
    else differing += " " + f;
  }
  fs::remove_all(root);
  return {same == files.size(),
          fmt("two CLI pipeline runs, seed fixed: %zu/%zu checkpoints and metrics CSVs byte-identical%s", same,
              files.size(), differing.empty() ? "" : (", differing:" + differing).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string config_dir = PPTR_CONFIG_DIR;
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 7));
  app.add_option("--configs", config_dir, "Directory holding toy_seg.cfg and pipeline_small.cfg");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient correctness", gradients},
      {"oracle equivalence", oracles},
      {"masking/locality invariants", invariants},
      {"planted-plane recovery", planted_planes},
      {"hierarchy beats flat cost", cost_claim},
      {"toy learning task", [&] { return toy_task(config_dir); }},
      {"determinism", [&] { return determinism(config_dir); }},
  };
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    all = all && v.pass;
    std::printf("criterion %d %s %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
