#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pptr/common/keyvalue.hpp"
#include "pptr/common/task.hpp"
#include "pptr/model/weights.hpp"

namespace pptr::training {

using model::ParameterStore;
using ad::Tensor;

enum class OptimizerKind { Sgd, Adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw Error(Errc::InvalidConfig, "unknown optimizer '" + s + "'");
}

struct TrainConfig {
  std::size_t epochs = 50;
  double lr = 1e-2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  Task task = Task::Segmentation;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw Error(Errc::InvalidConfig, "lr must be >= 0");
  if (c.batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw Error(Errc::InvalidConfig, "Adam betas must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw Error(Errc::InvalidConfig, "adam_eps must be > 0");
}

inline KeyValue to_keyvalue(const TrainConfig& c) {
  KeyValue kv;
  kv.set_num("epochs", c.epochs);
  kv.set_num("lr", c.lr);
  kv.set("optimizer", to_string(c.optimizer));
  kv.set_num("beta1", c.beta1);
  kv.set_num("beta2", c.beta2);
  kv.set_num("adam_eps", c.adam_eps);
  kv.set_num("batch_size", c.batch_size);
  kv.set_num("seed", c.seed);
  kv.set("task", to_string(c.task));
  return kv;
}

inline TrainConfig train_config_from(const KeyValue& kv, TrainConfig c = {}) {
  if (kv.has("epochs")) c.epochs = static_cast<std::size_t>(std::max<std::int64_t>(kv.get_int("epochs"), 0));
  if (kv.has("lr")) c.lr = kv.get_double("lr");
  if (kv.has("optimizer")) c.optimizer = parse_optimizer(kv.get("optimizer"));
  if (kv.has("beta1")) c.beta1 = kv.get_double("beta1");
  if (kv.has("beta2")) c.beta2 = kv.get_double("beta2");
  if (kv.has("adam_eps")) c.adam_eps = kv.get_double("adam_eps");
  if (kv.has("batch_size"))
    c.batch_size = static_cast<std::size_t>(std::max<std::int64_t>(kv.get_int("batch_size"), 0));
  if (kv.has("seed")) c.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  if (kv.has("task")) c.task = parse_task(kv.get("task"));
  return c;
}

/// SGD or bias-corrected Adam over every tensor of a store.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ParameterStore& w) : cfg_(cfg) {
    if (cfg.optimizer == OptimizerKind::Adam)
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_.emplace_back(w.at(i).shape());
        v_.emplace_back(w.at(i).shape());
      }
  }

  std::size_t steps() const { return t_; }

  /// grads[i] is the gradient of tensor i of `w`.
  void step(ParameterStore& w, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != w.size()) throw Error(Errc::LengthMismatch, "one gradient per parameter tensor");
    ++t_;
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        auto& p = w.at(i).values();
        const auto& g = grads[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
      }
      return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto& p = w.at(i).values();
      auto& m = m_[i].values();
      auto& v = v_[i].values();
      const auto& g = grads[i].values();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_eps);
      }
    }
  }

  void step(ParameterStore& w, const std::vector<Tensor>& grads) { step(w, grads, cfg_.lr); }

 private:
  TrainConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace pptr::training
