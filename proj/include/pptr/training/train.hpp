#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pptr/geometry/plane.hpp"
#include "pptr/model/pptr.hpp"
#include "pptr/primitives/normalize.hpp"
#include "pptr/training/metrics.hpp"
#include "pptr/training/optim.hpp"

namespace pptr::training {

using geometry::PointFrame;
using model::Clip;
using model::MemoryPool;
using model::PPTrConfig;
using primitives::PrimitiveAssignment;

/// A whole sequence with its per-frame primitive assignments.
struct SequenceData {
  std::string name;
  std::vector<PointFrame> frames;
  std::vector<PrimitiveAssignment> prims;
  int action = -1;
};

/// One training example: a clip, its memory pool and its targets.
struct Sample {
  std::string name;
  Clip clip;
  MemoryPool pool;
  std::vector<int> labels;  // centre-frame point classes
  int action = -1;
};

inline constexpr std::size_t kNormalNeighbors = 10;

/// First frame of the `clip_length`-frame window centred on frame length / 2.
inline std::size_t clip_start(std::size_t length, std::size_t clip_length) {
  if (clip_length < 1 || clip_length > length)
    throw Error(Errc::InvalidConfig, "clip of " + std::to_string(clip_length) + " frames in a sequence of " +
                                         std::to_string(length));
  const std::size_t centre = length / 2, half = clip_length / 2;
  return std::min(centre >= half ? centre - half : 0, length - clip_length);
}

/// Frames with normals estimated where the config needs them and they are
/// missing, and assignments capped at m_target primitives.
inline SequenceData prepared(SequenceData s, const PPTrConfig& cfg) {
  if (s.frames.size() != s.prims.size())
    throw Error(Errc::LengthMismatch, s.name + ": one primitive assignment per frame required");
  if (s.frames.empty()) throw Error(Errc::InvalidConfig, s.name + ": empty sequence");
  for (auto& f : s.frames)
    if (cfg.use_normals && !f.has_normals())
      f = geometry::estimate_normals(f, std::min(kNormalNeighbors, f.size())).frame;
  for (auto& a : s.prims) a = primitives::normalize_to_m(a, cfg.m_target);
  return s;
}

inline std::vector<int> frame_labels(const PointFrame& f, const std::string& name) {
  if (!f.has_labels()) throw Error(Errc::InvalidConfig, name + ": frame carries no class labels");
  return *f.labels;
}

/// The centred clip of a sequence with a given memory pool (empty for L' = 0).
inline Sample make_sample(const SequenceData& raw, const PPTrConfig& cfg, Task task, MemoryPool pool) {
  const SequenceData s = prepared(raw, cfg);
  model::check_pool(pool, cfg);
  if (cfg.memory_length > 0 && pool.empty()) throw Error(Errc::ConfigMismatch, s.name + ": L' > 0 needs a memory pool");
  const std::size_t start = clip_start(s.frames.size(), cfg.clip_length);
  Sample out;
  out.name = s.name;
  out.clip = model::prepare_clip(std::span(s.frames).subspan(start, cfg.clip_length),
                                 std::span(s.prims).subspan(start, cfg.clip_length), cfg);
  out.pool = std::move(pool);
  if (task == Task::Segmentation) {
    out.labels = frame_labels(s.frames[start + cfg.center_frame()], s.name);
  } else {
    if (raw.action < 0) throw Error(Errc::InvalidConfig, s.name + ": no action label");
    out.action = raw.action;
  }
  return out;
}

/// Memory pool of a whole sequence from the frozen single-frame extractor.
inline MemoryPool sequence_pool(const SequenceData& raw, const PPTrConfig& cfg, const model::ParameterStore& extractor) {
  const SequenceData s = prepared(raw, cfg);
  return model::build_memory_pool(s.frames, s.prims, extractor, model::extractor_config(cfg), cfg, s.name);
}

/// As above, building the pool from `extractor` when L' > 0.
inline Sample make_sample(const SequenceData& raw, const PPTrConfig& cfg, Task task,
                          const model::ParameterStore* extractor = nullptr) {
  MemoryPool pool;
  if (cfg.memory_length > 0) {
    if (!extractor) throw Error(Errc::InvalidConfig, "L' > 0 needs a pre-trained extractor");
    pool = sequence_pool(raw, cfg, *extractor);
  }
  return make_sample(raw, cfg, task, std::move(pool));
}

/// Single-frame samples (one per frame) for the extractor phase.
inline std::vector<Sample> frame_samples(const SequenceData& raw, const PPTrConfig& extractor_cfg) {
  if (extractor_cfg.clip_length != 1) throw Error(Errc::ConfigMismatch, "extractor must be single-frame");
  const SequenceData s = prepared(raw, extractor_cfg);
  std::vector<Sample> out;
  for (std::size_t t = 0; t < s.frames.size(); ++t) {
    Sample x;
    x.name = s.name + ":" + std::to_string(t);
    x.clip = model::prepare_clip(std::span(s.frames).subspan(t, 1), std::span(s.prims).subspan(t, 1), extractor_cfg);
    x.labels = frame_labels(s.frames[t], s.name);
    out.push_back(std::move(x));
  }
  return out;
}

inline std::vector<int> targets(const Sample& s, Task task) {
  return task == Task::Segmentation ? s.labels : std::vector<int>{s.action};
}

/// Class-unweighted mean cross-entropy of one sample; fills `grads` (one
/// tensor per store entry) when given.
inline double sample_loss(const Sample& s, const model::ParameterStore& w, const PPTrConfig& cfg, Task task,
                          std::vector<Tensor>* grads = nullptr) {
  ad::Tape tape(grads != nullptr);
  const model::BoundWeights bw(tape, w, grads != nullptr);
  const ad::Var loss =
      ad::cross_entropy(model::pptr_forward(s.clip, s.pool, bw, cfg, task).logits, targets(s, task));
  const double value = loss.value()[0];
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (ad::Var v : bw.ordered()) grads->push_back(tape.grad(v));
  }
  return value;
}

inline std::vector<int> predict(const Sample& s, const model::ParameterStore& w, const PPTrConfig& cfg, Task task) {
  ad::Tape tape(false);
  const model::BoundWeights bw(tape, w, false);
  const Tensor logits = model::pptr_forward(s.clip, s.pool, bw, cfg, task).logits.value();
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

/// Metrics over the concatenated predictions of every sample.
inline Metrics evaluate(std::span<const Sample> samples, const model::ParameterStore& w, const PPTrConfig& cfg,
                        Task task) {
  std::vector<int> pred, gt;
  for (const auto& s : samples) {
    const auto p = predict(s, w, cfg, task);
    const auto g = targets(s, task);
    pred.insert(pred.end(), p.begin(), p.end());
    gt.insert(gt.end(), g.begin(), g.end());
  }
  return mean_iou(pred, gt, cfg.num_classes);
}

/// Majority-vote baseline: every point of a fitted primitive takes the
/// primitive's most frequent ground-truth class (segmentation); every clip
/// takes the most frequent training action (classification).
inline Metrics baseline_metrics(std::span<const Sample> samples, std::span<const SequenceData> train_seqs, Task task,
                                std::size_t K) {
  std::vector<int> pred, gt;
  if (task == Task::Segmentation) {
    for (const auto& s : samples) {
      const auto& prims = s.clip.prims[s.clip.length / 2];
      const auto voted = primitives::majority_vote_labels(prims, s.labels);
      pred.insert(pred.end(), voted.begin(), voted.end());
      gt.insert(gt.end(), s.labels.begin(), s.labels.end());
    }
  } else {
    std::vector<std::size_t> count(K, 0);
    for (const auto& s : train_seqs)
      if (s.action >= 0 && static_cast<std::size_t>(s.action) < K) ++count[static_cast<std::size_t>(s.action)];
    const int major = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
    for (const auto& s : samples) {
      pred.push_back(major);
      gt.push_back(s.action);
    }
  }
  return mean_iou(pred, gt, K);
}

struct TrainResult {
  model::ParameterStore weights;
  Metrics metrics;  // held-out metrics after the last epoch, with the loss history
  std::vector<Metrics> per_epoch;
};

/// Called after every epoch with (1-based epoch, mean training loss, held-out metrics).
using EpochCallback = std::function<void(std::size_t, double, const Metrics&)>;

/// Mini-batch training. Sample order is reshuffled every epoch from
/// `tc.seed`; per-sample gradients are averaged in sample order before each
/// step. Metrics come from `eval_set`, or from the training set when it is
/// empty.
inline TrainResult train(std::span<const Sample> train_set, std::span<const Sample> eval_set, const PPTrConfig& cfg,
                         const TrainConfig& tc, model::ParameterStore init, const EpochCallback& on_epoch = {}) {
  validate(cfg);
  validate(tc);
  if (train_set.empty()) throw Error(Errc::InvalidConfig, "empty training set");
  const auto held_out = eval_set.empty() ? train_set : eval_set;
  TrainResult res;
  res.weights = std::move(init);
  model::ParameterStore& w = res.weights;
  Optimizer opt(tc, w);
  Rng rng(tc.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads, sum;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double total = 0.0;
    try {
      for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
        const std::size_t e = std::min(order.size(), b + tc.batch_size);
        sum.clear();
        for (std::size_t k = b; k < e; ++k) {
          const double l = sample_loss(train_set[order[k]], w, cfg, tc.task, &grads);
          if (!std::isfinite(l)) throw Error(Errc::NonFiniteInput, "loss is not finite");
          total += l;
          if (sum.empty()) {
            sum = grads;
          } else {
            for (std::size_t p = 0; p < sum.size(); ++p)
              for (std::size_t i = 0; i < sum[p].size(); ++i) sum[p][i] += grads[p][i];
          }
        }
        const double inv = 1.0 / static_cast<double>(e - b);
        for (auto& g : sum)
          for (double& v : g.values()) v *= inv;
        opt.step(w, sum);
      }
    } catch (const Error& err) {
      if (err.code() != Errc::NonFiniteInput) throw;
      throw Error(Errc::DivergedLoss, "epoch " + std::to_string(epoch) + ": " + err.what());
    }
    const double loss = total / static_cast<double>(order.size());
    res.metrics.loss_history.push_back(loss);
    Metrics m = evaluate(held_out, w, cfg, tc.task);
    m.loss_history = res.metrics.loss_history;
    res.per_epoch.push_back(m);
    res.metrics = m;
    if (on_epoch) on_epoch(epoch, loss, m);
  }
  return res;
}

inline TrainResult train(std::span<const Sample> train_set, std::span<const Sample> eval_set, const PPTrConfig& cfg,
                         const TrainConfig& tc, const EpochCallback& on_epoch = {}) {
  return train(train_set, eval_set, cfg, tc, model::init_weights(cfg), on_epoch);
}

/// Phase one: the single-frame extractor trained for segmentation on every
/// frame of the training sequences.
inline TrainResult pretrain_extractor(std::span<const SequenceData> sequences, const PPTrConfig& cfg,
                                      const TrainConfig& tc, const EpochCallback& on_epoch = {}) {
  const PPTrConfig ec = model::extractor_config(cfg);
  std::vector<Sample> frames;
  for (const auto& s : sequences) {
    auto f = frame_samples(s, ec);
    frames.insert(frames.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  TrainConfig t = tc;
  t.task = Task::Segmentation;
  return train(frames, {}, ec, t, on_epoch);
}

/// Phase two starts from fresh weights with every tensor the extractor
/// shares copied over.
inline model::ParameterStore online_init(const PPTrConfig& cfg, const model::ParameterStore* extractor) {
  model::ParameterStore w = model::init_weights(cfg);
  if (extractor) model::copy_matching(w, *extractor);
  return w;
}

}  // namespace pptr::training
