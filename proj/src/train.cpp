#include "cheblap/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "cheblap/error.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

double lr_update(double prev_lr, double speed_now, double speed_prev) {
  const double next = speed_now >= speed_prev ? prev_lr * kLearningRateFactor : prev_lr / kLearningRateFactor;
  return std::clamp(next, kMinLearningRate, kMaxLearningRate);
}

std::vector<Matrix*> trainable_tensors(ModelParams& p) {
  std::vector<Matrix*> out;
  for (auto& block : p.theta)
    for (auto& th : block) out.push_back(&th);
  out.push_back(&p.classifier_w);
  out.push_back(&p.classifier_b);
  if (p.config.mode == Mode::Learned || p.config.mode == Mode::TLL) {
    for (auto& a : p.adjacency) out.push_back(&a.mutable_values());
  }
  if (p.config.mode == Mode::ML) out.push_back(&p.ml_logits);
  return out;
}

std::vector<const Matrix*> trainable_gradients(const Gradients& g, Mode mode) {
  std::vector<const Matrix*> out;
  for (const auto& block : g.theta)
    for (const auto& th : block) out.push_back(&th);
  out.push_back(&g.classifier_w);
  out.push_back(&g.classifier_b);
  if (mode == Mode::Learned || mode == Mode::TLL) {
    for (const auto& a : g.adjacency) out.push_back(&a);
  }
  if (mode == Mode::ML) out.push_back(&g.ml_logits);
  return out;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, double lr, const AdamSettings& s) {
  auto tensors = trainable_tensors(params);
  auto gradients = trainable_gradients(grads, params.config.mode);
  if (tensors.size() != gradients.size()) throw Error(ErrorCode::ShapeMismatch, "gradient bundle does not match params");
  if (state.m.empty()) {
    for (const Matrix* t : tensors) {
      state.m.push_back(Matrix::Zero(t->rows(), t->cols()));
      state.v.push_back(Matrix::Zero(t->rows(), t->cols()));
    }
  }
  if (state.m.size() != tensors.size()) throw Error(ErrorCode::ShapeMismatch, "optimizer state does not match params");
  const bool has_adjacency = params.config.mode == Mode::Learned || params.config.mode == Mode::TLL;
  const std::size_t first_adj = has_adjacency ? tensors.size() - params.adjacency.size() : tensors.size();

  ++state.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Matrix& w = *tensors[i];
    Matrix g = *gradients[i];
    if (g.rows() != w.rows() || g.cols() != w.cols()) throw Error(ErrorCode::ShapeMismatch, "gradient shape mismatch");
    if (!g.allFinite()) throw Error(ErrorCode::NonFinite, "non-finite gradient in tensor " + std::to_string(i));
    if (i >= first_adj) g = (w.array() <= 0.0 && g.array() > 0.0).select(0.0, g);
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * g;
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * g.cwiseAbs2();
    w.array() -= lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + s.eps);
  }
  for (auto& a : params.adjacency) a.project_nonnegative();
}

namespace {

// Runs fn(i) for i in [0, count) on `workers` threads, contiguous blocks.
template <class F>
void parallel_for(std::size_t count, int workers, F&& fn) {
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t w = std::min<std::size_t>(workers, count);
  std::vector<std::exception_ptr> errors(w);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t * count / w; i < (t + 1) * count / w; ++i) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

EvalResult evaluate_with(const ModelParams& params, const OperatorState& op, const std::vector<TrajectoryGraph>& split,
                         int workers) {
  if (split.empty()) throw Error(ErrorCode::EmptySplit, "cannot evaluate an empty split");
  const int classes = params.config.num_classes;
  std::vector<int> predicted(split.size());
  parallel_for(split.size(), workers,
               [&](std::size_t i) { predicted[i] = predict(model_forward(split[i].psi, params, op)); });
  EvalResult r;
  r.confusion.assign(classes, std::vector<long>(classes, 0));
  long correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const int truth = split[i].label;
    if (truth < 0 || truth >= classes) throw Error(ErrorCode::InvalidLabel, "label outside the model's classes");
    ++r.confusion[truth][predicted[i]];
    correct += predicted[i] == truth;
  }
  r.sample_accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  r.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    const long total = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), 0L);
    if (total == 0) continue;
    r.per_class[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(total);
    sum += r.per_class[c];
    ++present;
  }
  r.class_accuracy = sum / present;
  return r;
}

}  // namespace

EvalResult evaluate(const ModelParams& params, const std::vector<TrajectoryGraph>& split) {
  return evaluate_with(params, prepare_operator(params), split, 1);
}

GramReport basis_diagnostics(const std::vector<Matrix>& terms) {
  const Index k = static_cast<Index>(terms.size());
  GramReport r;
  r.gram = Matrix::Zero(k, k);
  for (Index a = 0; a < k; ++a)
    for (Index b = a; b < k; ++b) r.gram(a, b) = r.gram(b, a) = frobenius_dot(terms[a], terms[b]);
  double off = 0.0;
  double diag = 0.0;
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      const double g2 = r.gram(a, b) * r.gram(a, b);
      (a == b ? diag : off) += g2;
    }
  }
  r.offdiag_energy = diag > 0.0 ? off / diag : 0.0;
  return r;
}

void write_metrics_log(std::ostream& out, const std::vector<EpochMetrics>& rows) {
  for (const auto& m : rows) {
    out << m.epoch << ' ' << io::format_double(m.loss) << ' ' << io::format_double(m.lr) << ' '
        << io::format_double(m.train_acc) << ' ' << io::format_double(m.test_acc) << ' '
        << io::format_double(m.gram_offdiag) << '\n';
  }
}

ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data) {
  ModelConfig mc;
  mc.mode = cfg.mode;
  mc.kind = cfg.laplacian_kind();
  mc.orthogonal = cfg.orth;
  mc.order = cfg.order;
  mc.channels = cfg.channels;
  mc.blocks = cfg.blocks;
  mc.final_relu = cfg.final_relu;
  mc.num_classes = std::max(2, data.num_classes);
  mc.nodes = data.nodes;
  mc.features = data.features;
  return mc;
}

int worker_count(const TrainConfig& cfg) {
  if (cfg.deterministic) return 1;
  int w = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("CHEBLAP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) w = std::min(w, cap);
  }
  return std::max(1, w);
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const TrainHooks& hooks) {
  if (data.train.empty()) throw Error(ErrorCode::EmptySplit, "training split is empty");
  const ModelConfig mc = model_config_for(cfg, data);
  if (auto w = order_warning(mc); w && hooks.warn) hooks.warn(*w);

  TrainResult result;
  result.params = init_params(mc, data.train.front().adjacency, cfg.seed, cfg.init_noise);
  ModelParams& params = result.params;
  const AdamSettings adam{cfg.beta1, cfg.beta2, cfg.adam_eps};
  AdamState state;
  const int workers = worker_count(cfg);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  double lr = cfg.lr;
  std::vector<double> epoch_losses;
  const double penalty_weight = (mc.mode == Mode::TLL && cfg.orth) ? cfg.tll_penalty : 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto abort = [&](const std::string& why) {
      return Error(ErrorCode::NumericalAbort, "epoch " + std::to_string(epoch) + ": " + why);
    };
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
        const OperatorState op = prepare_operator(params);
        std::vector<Gradients> per_sample(count);
        std::vector<double> losses(count);
        parallel_for(count, workers, [&](std::size_t i) {
          const TrajectoryGraph& g = data.train[order[start + i]];
          per_sample[i] = sample_backward(model_forward(g.psi, params, op), params, op, g.label, &losses[i]);
        });
        Gradients total = Gradients::zeros_like(params);
        for (std::size_t i = 0; i < count; ++i) {
          if (!std::isfinite(losses[i])) throw abort("non-finite training loss");
          total += per_sample[i];
          loss_sum += losses[i];
        }
        seen += count;
        total *= 1.0 / static_cast<double>(count);
        std::vector<Matrix> penalty_grads;
        if (penalty_weight > 0.0) gram_penalty(op.built, penalty_weight, &penalty_grads);
        operator_backward(params, op, total, penalty_weight > 0.0 ? &penalty_grads : nullptr);
        adam_step(params, total, state, lr, adam);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NumericalAbort) throw;
      throw abort(e.what());
    }

    const double mean_loss = loss_sum / static_cast<double>(seen);
    if (!std::isfinite(mean_loss)) throw abort("non-finite training loss");
    for (Matrix* t : trainable_tensors(params)) {
      if (!t->allFinite()) throw abort("non-finite parameters after update");
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = mean_loss;
    m.lr = lr;
    try {
      const OperatorState op = prepare_operator(params);
      m.train_acc = evaluate_with(params, op, data.train, workers).class_accuracy;
      m.test_acc = data.test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                     : evaluate_with(params, op, data.test, workers).class_accuracy;
      m.gram_offdiag = basis_diagnostics(op.basis.terms).offdiag_energy;
    } catch (const Error& e) {
      throw abort(e.what());
    }
    result.metrics.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);

    epoch_losses.push_back(mean_loss);
    const std::size_t e = epoch_losses.size();
    if (e >= 3) {
      const double now = std::fabs(epoch_losses[e - 1] - epoch_losses[e - 2]);
      const double prev = std::fabs(epoch_losses[e - 2] - epoch_losses[e - 3]);
      lr = lr_update(lr, now, prev);
    }
  }

  const OperatorState op = prepare_operator(params);
  result.train_eval = evaluate_with(params, op, data.train, workers);
  if (!data.test.empty()) result.test_eval = evaluate_with(params, op, data.test, workers);
  return result;
}

}  // namespace cheblap
