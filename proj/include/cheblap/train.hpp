#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cheblap/config.hpp"
#include "cheblap/model.hpp"
#include "cheblap/skeleton.hpp"

namespace cheblap {

inline constexpr double kMinLearningRate = 1e-6;
inline constexpr double kMaxLearningRate = 1e-1;
inline constexpr double kLearningRateFactor = 0.99;

// Global learning-rate rule driven by the speed |delta loss| of the training
// loss: a faster change shrinks the rate by 0.99, a slower one grows it by
// 1/0.99 (ties shrink). The result is clamped to [1e-6, 1e-1].
double lr_update(double prev_lr, double speed_now, double speed_prev);

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

// One Adam update over the trainable tensors of the current mode. Gradients of
// adjacency entries sitting at the 0 bound that would push them negative are
// zeroed first; adjacencies are projected back to >= 0 afterwards. S-kind
// adjacency gradients already carry the J_s tie from operator_backward.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr, const AdamSettings& s = {});

// Trainable tensors for the mode: filters and classifier always, adjacency for
// Learned/TLL, logits for ML.
std::vector<Matrix*> trainable_tensors(ModelParams& params);
std::vector<const Matrix*> trainable_gradients(const Gradients& grads, Mode mode);

struct EvalResult {
  double class_accuracy = 0.0;   // mean of per-class accuracies over the classes present
  double sample_accuracy = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the split
  std::vector<std::vector<long>> confusion;  // [true][predicted]
};

EvalResult evaluate(const ModelParams& params, const std::vector<TrajectoryGraph>& split);

struct GramReport {
  Matrix gram;  // K x K Frobenius inner products
  double offdiag_energy = 0.0;  // sum_{k!=k'} <T_k,T_k'>^2 / sum_k <T_k,T_k>^2
};

GramReport basis_diagnostics(const std::vector<Matrix>& terms);
inline GramReport basis_diagnostics(const ChebyshevBasis& basis) { return basis_diagnostics(basis.terms); }

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double gram_offdiag = 0.0;
};

// `epoch loss lr train_acc test_acc gram_offdiag`, one line per epoch.
void write_metrics_log(std::ostream& out, const std::vector<EpochMetrics>& rows);

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const std::string&)> warn;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
  EvalResult train_eval;
  std::optional<EvalResult> test_eval;
};

ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data);

// Number of worker threads for per-sample work: 1 in deterministic mode,
// otherwise cfg.threads (or the hardware count), capped by CHEBLAP_THREADS.
int worker_count(const TrainConfig& cfg);

// Throws Error(NumericalAbort) naming the epoch when the loss or any
// gradient/parameter becomes non-finite.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrainHooks& hooks = {});

}  // namespace cheblap
