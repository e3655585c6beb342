#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cheblap/chebyshev.hpp"
#include "cheblap/graph.hpp"
#include "cheblap/laplacian_grad.hpp"
#include "cheblap/matrix.hpp"

namespace cheblap {

// HL: frozen handcrafted Laplacian. ML: learned convex combination of the
// handcrafted parametrizations. TLL: K independently learned operators used
// directly as the basis. Learned: one shared adjacency feeding the
// Chebyshev recursion.
enum class Mode { HL, ML, TLL, Learned };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct ModelConfig {
  Mode mode = Mode::Learned;
  LaplacianKind kind{LaplacianFamily::Ndrw, true};
  bool orthogonal = true;  // spectral rescaling of the operator (Gram penalty for TLL)
  int order = 4;           // K
  int channels = 64;
  int blocks = 1;
  // ReLU on the last block before pooling; earlier blocks always use ReLU.
  bool final_relu = true;
  int num_classes = 2;
  Index nodes = 0;
  Index features = 0;  // s, the per-node signal size

  Index pooled_size() const { return static_cast<Index>(blocks) * channels; }
};

// The five plain parametrizations combined by ML mode.
inline constexpr int kMultiLaplacianCount = 5;
// MLWeights: softmax of the ML logits, always on the probability simplex.
Vector ml_weights(const Matrix& logits);

struct ModelParams {
  ModelConfig config;
  std::vector<std::vector<Matrix>> theta;  // [block][k]: d_in x C
  Matrix classifier_w;                     // F x classes
  Matrix classifier_b;                     // 1 x classes
  Matrix handcrafted;                      // frozen input graph
  std::vector<AdjacencyParam> adjacency;   // HL/Learned: 1 (HL frozen), TLL: K, ML: none
  Matrix ml_logits;                        // ML: 1 x 5

  // Visits every tensor in a fixed order as (name, matrix).
  template <class F>
  void for_each_tensor(F&& f) {
    for (std::size_t b = 0; b < theta.size(); ++b)
      for (std::size_t k = 0; k < theta[b].size(); ++k)
        f("theta." + std::to_string(b) + "." + std::to_string(k), theta[b][k]);
    f(std::string("classifier.w"), classifier_w);
    f(std::string("classifier.b"), classifier_b);
    f(std::string("handcrafted"), handcrafted);
    for (std::size_t i = 0; i < adjacency.size(); ++i)
      f("adjacency." + std::to_string(i), adjacency[i].mutable_values());
    if (config.mode == Mode::ML) f(std::string("ml.logits"), ml_logits);
  }
};

// Uniform(+-1/sqrt(fan_in)) filters and classifier, zero bias. Trainable
// adjacencies start at the handcrafted graph plus Uniform[0, init_noise).
ModelParams init_params(const ModelConfig& config, const Matrix& handcrafted, std::uint64_t seed,
                        double init_noise = 0.01);

// Configuration warning: K should not exceed min(|V|, s).
std::optional<std::string> order_warning(const ModelConfig& config);

struct OperatorOptions {
  // Replaces the eigen-solved rescaling bounds (the backward pass treats them
  // as constants either way).
  std::optional<SpectralBounds> fixed_bounds;
};

// Everything derived from the graph parameters for one optimizer step:
// shared by every sample of a batch.
struct OperatorState {
  Mode mode = Mode::Learned;
  ChebyshevBasis basis;              // terms used for aggregation
  std::vector<Matrix> built;         // unrescaled operators: Learned/HL/ML: 1, TLL: K
  std::vector<Matrix> components;    // ML: the five handcrafted operators
  Vector weights;                    // ML
  std::optional<SpectralBounds> bounds;
};

OperatorState prepare_operator(const ModelParams& params, const OperatorOptions& opts = {});

// ---- Chebyshev convolution block ----

struct BlockTrace {
  Matrix input;                  // n x d_in (psi^T)
  std::vector<Matrix> aggregates;  // T_k input
  Matrix pre;                    // pre-activation n x C
  Matrix output;                 // n x C
  bool relu = true;
  std::uint64_t basis_hash = 0;
};

// (psi * F) = sum_k T_k psi^T Theta_k followed by the block activation. psi is s x n.
BlockTrace conv_block_forward(const Matrix& psi, const ChebyshevBasis& basis, const std::vector<Matrix>& theta,
                              bool relu);

struct BlockGradients {
  std::vector<Matrix> theta;
  BasisGradients basis;
  Matrix psi;  // s x n
};

BlockGradients conv_block_backward(const BlockTrace& trace, const ChebyshevBasis& basis,
                                   const std::vector<Matrix>& theta, const Matrix& grad_out);

// Mean over nodes (rows), one value per channel.
Vector global_average_pool(const Matrix& features);

struct ClassifierResult {
  double loss = 0.0;
  Vector logits;
  Vector probabilities;
  Vector grad_logits;  // p - onehot(label)
};

// Numerically stable softmax + cross entropy on logits.
ClassifierResult softmax_cross_entropy(const Vector& logits, int label);

struct ClassifyAndLossResult {
  ClassifierResult head;
  Matrix grad_w;
  Matrix grad_b;
  Vector grad_pooled;
};

ClassifyAndLossResult classify_and_loss(const Vector& pooled, const ModelParams& params, int label);

// ---- whole model ----

struct ForwardTrace {
  std::vector<BlockTrace> blocks;
  Vector pooled;
  Vector logits;
  Vector probabilities;
  std::uint64_t basis_hash = 0;
};

ForwardTrace model_forward(const Matrix& psi, const ModelParams& params, const OperatorState& op);
inline int predict(const ForwardTrace& t) {
  Index best = 0;
  t.probabilities.maxCoeff(&best);
  return static_cast<int>(best);
}

// Gradient bundle mirroring the trainable tensors of ModelParams.
struct Gradients {
  std::vector<std::vector<Matrix>> theta;
  Matrix classifier_w;
  Matrix classifier_b;
  std::vector<Matrix> adjacency;
  Matrix ml_logits;
  BasisGradients basis;  // dLoss/dT_k summed over blocks, before the Laplacian backward

  static Gradients zeros_like(const ModelParams& params);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

// Per-sample gradients for filters, classifier and basis terms; graph
// gradients are left at zero (apply operator_backward on the accumulated
// basis gradients).
Gradients sample_backward(const ForwardTrace& trace, const ModelParams& params, const OperatorState& op, int label,
                          double* loss = nullptr);

// Pushes g.basis down to the graph parameters (adjacency / ML logits) and
// adds `extra_operator_grads` (dLoss/dL_k, TLL penalty) on the way. HL leaves
// everything at zero.
void operator_backward(const ModelParams& params, const OperatorState& op, Gradients& g,
                       const std::vector<Matrix>* extra_operator_grads = nullptr);

// sample_backward followed by operator_backward.
Gradients model_backward(const ForwardTrace& trace, const ModelParams& params, const OperatorState& op, int label,
                         double* loss = nullptr);

// Loss of one sample, recomputing the operator.
double sample_loss(const Matrix& psi, int label, const ModelParams& params, const OperatorOptions& opts = {});

// ---- TLL Gram penalty ----

// lambda * sum_{k != k'} <L_k, L_k'>_F^2 and its gradient w.r.t. each L_k.
double gram_penalty(const std::vector<Matrix>& ops, double lambda, std::vector<Matrix>* grads);

// ---- checkpoint ----

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

// Version tag, config echo, then each tensor as `name rows cols` followed by
// row-major values. Doubles are written in shortest round-trip form.
void write_checkpoint(std::ostream& out, const ModelParams& params, const ConfigEcho& extra);
struct Checkpoint {
  ModelParams params;
  ConfigEcho config;
};
Checkpoint read_checkpoint(std::istream& in, const std::string& source);

}  // namespace cheblap
