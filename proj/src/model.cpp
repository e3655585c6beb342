#include "cheblap/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include "cheblap/error.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::HL: return "hl";
    case Mode::ML: return "ml";
    case Mode::TLL: return "tll";
    case Mode::Learned: return "learned";
  }
  return "?";
}

Mode parse_mode(const std::string& text) {
  std::string lower;
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "hl") return Mode::HL;
  if (lower == "ml") return Mode::ML;
  if (lower == "tll") return Mode::TLL;
  if (lower == "learned") return Mode::Learned;
  throw Error(ErrorCode::ConfigError, "unknown mode '" + text + "' (expected hl, ml, tll or learned)");
}

Vector ml_weights(const Matrix& logits) {
  const Vector l = logits.reshaped();
  const double m = l.maxCoeff();
  const Vector e = (l.array() - m).exp().matrix();
  return e / e.sum();
}

ModelParams init_params(const ModelConfig& config, const Matrix& handcrafted, std::uint64_t seed, double init_noise) {
  if (config.order < 1) throw Error(ErrorCode::InvalidOrder, "K must be >= 1");
  if (config.blocks < 1 || config.channels < 1 || config.num_classes < 2 || config.features < 1) {
    throw Error(ErrorCode::ConfigError, "blocks, channels, features must be positive and classes >= 2");
  }
  if (handcrafted.rows() != config.nodes || handcrafted.cols() != config.nodes) {
    throw Error(ErrorCode::ShapeMismatch, "handcrafted adjacency does not match the node count");
  }
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](Index rows, Index cols, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
  };

  ModelParams p;
  p.config = config;
  p.handcrafted = handcrafted;
  const Index c = config.channels;
  for (int b = 0; b < config.blocks; ++b) {
    const Index d_in = b == 0 ? config.features : c;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in * config.order));
    std::vector<Matrix> block;
    for (int k = 0; k < config.order; ++k) block.push_back(uniform(d_in, c, bound));
    p.theta.push_back(std::move(block));
  }
  p.classifier_w = uniform(config.pooled_size(), config.num_classes,
                           1.0 / std::sqrt(static_cast<double>(config.pooled_size())));
  p.classifier_b = Matrix::Zero(1, config.num_classes);

  std::uniform_real_distribution<double> noise(0.0, init_noise);
  auto perturbed = [&]() {
    Matrix a = handcrafted;
    for (Index j = 0; j < a.cols(); ++j)
      for (Index i = 0; i < a.rows(); ++i) a(i, j) += noise(rng);
    return AdjacencyParam(a);
  };
  switch (config.mode) {
    case Mode::HL: p.adjacency.emplace_back(handcrafted); break;
    case Mode::Learned: p.adjacency.push_back(perturbed()); break;
    case Mode::TLL:
      for (int k = 0; k < config.order; ++k) p.adjacency.push_back(perturbed());
      break;
    case Mode::ML: p.ml_logits = Matrix::Zero(1, kMultiLaplacianCount); break;
  }
  return p;
}

std::optional<std::string> order_warning(const ModelConfig& config) {
  const Index bound = std::min(config.nodes, config.features);
  if (config.order > bound) {
    return "K=" + std::to_string(config.order) + " exceeds min(|V|, s)=" + std::to_string(bound) +
           "; higher Chebyshev terms cannot add independent aggregates";
  }
  return std::nullopt;
}

OperatorState prepare_operator(const ModelParams& params, const OperatorOptions& opts) {
  const ModelConfig& cfg = params.config;
  OperatorState op;
  op.mode = cfg.mode;
  auto finish_chebyshev = [&](const Matrix& l, bool with_derivs) {
    Matrix used = l;
    if (cfg.orthogonal) {
      LaplacianOperator tmp{l, cfg.kind, false, std::nullopt};
      const SpectralBounds b = opts.fixed_bounds ? *opts.fixed_bounds : rescaling_bounds(l);
      used = rescale_spectrum(tmp, b).matrix;
      op.bounds = b;
    }
    op.basis = forward_basis(used, cfg.order);
    if (with_derivs) derivative_basis(used, op.basis);
  };

  switch (cfg.mode) {
    case Mode::HL:
    case Mode::Learned: {
      if (params.adjacency.size() != 1) throw Error(ErrorCode::ShapeMismatch, "expected one adjacency");
      op.built.push_back(build_laplacian(params.adjacency[0], cfg.kind).matrix);
      finish_chebyshev(op.built[0], cfg.mode == Mode::Learned);
      break;
    }
    case Mode::ML: {
      op.weights = ml_weights(params.ml_logits);
      Matrix l = Matrix::Zero(cfg.nodes, cfg.nodes);
      for (int m = 0; m < kMultiLaplacianCount; ++m) {
        op.components.push_back(build_laplacian(params.handcrafted, {kAllFamilies[m], cfg.kind.symmetric}).matrix);
        l += op.weights(m) * op.components.back();
      }
      op.built.push_back(l);
      finish_chebyshev(l, true);
      break;
    }
    case Mode::TLL: {
      if (static_cast<int>(params.adjacency.size()) != cfg.order) {
        throw Error(ErrorCode::ShapeMismatch, "TLL needs K adjacency matrices");
      }
      for (const auto& a : params.adjacency) op.built.push_back(build_laplacian(a, cfg.kind).matrix);
      op.basis.terms = op.built;
      op.basis.source_hash = matrix_checksum(op.built[0]);
      break;
    }
  }
  return op;
}

BlockTrace conv_block_forward(const Matrix& psi, const ChebyshevBasis& basis, const std::vector<Matrix>& theta,
                              bool relu) {
  if (psi.cols() != basis.size()) throw Error(ErrorCode::ShapeMismatch, "signal node count != basis size");
  if (theta.size() != basis.terms.size()) throw Error(ErrorCode::ShapeMismatch, "filter count != basis order");
  BlockTrace t;
  t.relu = relu;
  t.basis_hash = basis.source_hash;
  t.input = psi.transpose();
  const Index channels = theta.empty() ? 0 : theta[0].cols();
  t.pre = Matrix::Zero(t.input.rows(), channels);
  t.aggregates.reserve(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    if (theta[k].rows() != t.input.cols() || theta[k].cols() != channels) {
      throw Error(ErrorCode::ShapeMismatch, "filter " + std::to_string(k) + " has the wrong shape");
    }
    t.aggregates.push_back(basis.terms[k] * t.input);
    t.pre.noalias() += t.aggregates.back() * theta[k];
  }
  t.output = relu ? t.pre.cwiseMax(0.0) : t.pre;
  return t;
}

BlockGradients conv_block_backward(const BlockTrace& trace, const ChebyshevBasis& basis,
                                   const std::vector<Matrix>& theta, const Matrix& grad_out) {
  if (trace.basis_hash != basis.source_hash || trace.aggregates.size() != theta.size()) {
    throw Error(ErrorCode::MismatchedTrace, "trace does not belong to this basis/filters");
  }
  if (grad_out.rows() != trace.pre.rows() || grad_out.cols() != trace.pre.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "output gradient has the wrong shape");
  }
  Matrix g_pre = grad_out;
  if (trace.relu) g_pre = (trace.pre.array() > 0.0).select(grad_out, 0.0);

  BlockGradients g;
  const Index n = trace.input.rows();
  Matrix grad_input = Matrix::Zero(n, trace.input.cols());
  g.basis.nabla.reserve(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    g.theta.push_back(trace.aggregates[k].transpose() * g_pre);
    g.basis.nabla.push_back(g_pre * (trace.input * theta[k]).transpose());
    grad_input.noalias() += basis.terms[k].transpose() * (g_pre * theta[k].transpose());
  }
  g.psi = grad_input.transpose();
  return g;
}

Vector global_average_pool(const Matrix& features) {
  if (features.rows() < 1) throw Error(ErrorCode::ShapeMismatch, "pooling over zero nodes");
  return features.colwise().mean().transpose();
}

ClassifierResult softmax_cross_entropy(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw Error(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " outside [0, " +
                                             std::to_string(logits.size()) + ")");
  }
  ClassifierResult r;
  r.logits = logits;
  const double m = logits.maxCoeff();
  const Vector e = (logits.array() - m).exp().matrix();
  const double z = e.sum();
  r.probabilities = e / z;
  r.loss = std::log(z) + m - logits(label);
  r.grad_logits = r.probabilities;
  r.grad_logits(label) -= 1.0;
  return r;
}

ClassifyAndLossResult classify_and_loss(const Vector& pooled, const ModelParams& params, int label) {
  if (pooled.size() != params.classifier_w.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "pooled feature size does not match classifier");
  }
  const Vector logits = params.classifier_w.transpose() * pooled + params.classifier_b.transpose();
  ClassifyAndLossResult r;
  r.head = softmax_cross_entropy(logits, label);
  r.grad_w = pooled * r.head.grad_logits.transpose();
  r.grad_b = r.head.grad_logits.transpose();
  r.grad_pooled = params.classifier_w * r.head.grad_logits;
  return r;
}

ForwardTrace model_forward(const Matrix& psi, const ModelParams& params, const OperatorState& op) {
  const ModelConfig& cfg = params.config;
  if (psi.rows() != cfg.features || psi.cols() != cfg.nodes) {
    throw Error(ErrorCode::ShapeMismatch, "signal must be " + std::to_string(cfg.features) + " x " +
                                              std::to_string(cfg.nodes));
  }
  ForwardTrace t;
  t.basis_hash = op.basis.source_hash;
  t.pooled.resize(cfg.pooled_size());
  Matrix signal = psi;
  for (int b = 0; b < cfg.blocks; ++b) {
    const bool relu = b + 1 < cfg.blocks || cfg.final_relu;
    t.blocks.push_back(conv_block_forward(signal, op.basis, params.theta[b], relu));
    t.pooled.segment(static_cast<Index>(b) * cfg.channels, cfg.channels) = global_average_pool(t.blocks.back().output);
    signal = t.blocks.back().output.transpose();
  }
  t.logits = params.classifier_w.transpose() * t.pooled + params.classifier_b.transpose();
  const double m = t.logits.maxCoeff();
  const Vector e = (t.logits.array() - m).exp().matrix();
  t.probabilities = e / e.sum();
  return t;
}

Gradients Gradients::zeros_like(const ModelParams& params) {
  Gradients g;
  for (const auto& block : params.theta) {
    std::vector<Matrix> gb;
    for (const auto& th : block) gb.push_back(Matrix::Zero(th.rows(), th.cols()));
    g.theta.push_back(std::move(gb));
  }
  g.classifier_w = Matrix::Zero(params.classifier_w.rows(), params.classifier_w.cols());
  g.classifier_b = Matrix::Zero(params.classifier_b.rows(), params.classifier_b.cols());
  for (const auto& a : params.adjacency) g.adjacency.push_back(Matrix::Zero(a.size(), a.size()));
  g.ml_logits = Matrix::Zero(params.ml_logits.rows(), params.ml_logits.cols());
  g.basis = BasisGradients::zeros(params.config.order, params.config.nodes);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  for (std::size_t b = 0; b < theta.size(); ++b)
    for (std::size_t k = 0; k < theta[b].size(); ++k) theta[b][k] += o.theta[b][k];
  classifier_w += o.classifier_w;
  classifier_b += o.classifier_b;
  for (std::size_t i = 0; i < adjacency.size(); ++i) adjacency[i] += o.adjacency[i];
  ml_logits += o.ml_logits;
  basis += o.basis;
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& block : theta)
    for (auto& th : block) th *= s;
  classifier_w *= s;
  classifier_b *= s;
  for (auto& a : adjacency) a *= s;
  ml_logits *= s;
  for (auto& nb : basis.nabla) nb *= s;
  return *this;
}

Gradients sample_backward(const ForwardTrace& trace, const ModelParams& params, const OperatorState& op, int label,
                          double* loss) {
  const ModelConfig& cfg = params.config;
  if (trace.basis_hash != op.basis.source_hash || static_cast<int>(trace.blocks.size()) != cfg.blocks) {
    throw Error(ErrorCode::MismatchedTrace, "trace was produced by a different operator state");
  }
  auto head = classify_and_loss(trace.pooled, params, label);
  if (loss) *loss = head.head.loss;

  Gradients g = Gradients::zeros_like(params);
  g.classifier_w = head.grad_w;
  g.classifier_b = head.grad_b;
  const double inv_n = 1.0 / static_cast<double>(cfg.nodes);
  Matrix grad_from_next;  // dLoss / d(block output), n x C, via the next block's input
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const BlockTrace& bt = trace.blocks[b];
    Matrix grad_out = Matrix::Zero(bt.output.rows(), bt.output.cols());
    const Vector gp = head.grad_pooled.segment(static_cast<Index>(b) * cfg.channels, cfg.channels) * inv_n;
    grad_out.rowwise() += gp.transpose();
    if (grad_from_next.size()) grad_out += grad_from_next;
    BlockGradients bg = conv_block_backward(bt, op.basis, params.theta[b], grad_out);
    g.theta[b] = std::move(bg.theta);
    g.basis += bg.basis;
    grad_from_next = bg.psi.transpose();
  }
  return g;
}

void operator_backward(const ModelParams& params, const OperatorState& op, Gradients& g,
                       const std::vector<Matrix>* extra) {
  const ModelConfig& cfg = params.config;
  switch (cfg.mode) {
    case Mode::HL: return;
    case Mode::Learned:
    case Mode::ML: {
      Matrix grad_l = grad_wrt_laplacian(g.basis, op.basis);
      if (op.bounds) grad_l *= rescale_gain(*op.bounds);
      if (extra && !extra->empty()) grad_l += (*extra)[0];
      if (cfg.mode == Mode::Learned) {
        g.adjacency[0] += apply_parametrization_jacobian(cfg.kind, params.adjacency[0].values(), op.built[0], grad_l);
      } else {
        Vector gw(kMultiLaplacianCount);
        for (int m = 0; m < kMultiLaplacianCount; ++m) gw(m) = frobenius_dot(grad_l, op.components[m]);
        const double mean = op.weights.dot(gw);
        const Vector ga = op.weights.cwiseProduct((gw.array() - mean).matrix());
        g.ml_logits += ga.transpose();
      }
      return;
    }
    case Mode::TLL: {
      for (int k = 0; k < cfg.order; ++k) {
        Matrix grad_l = g.basis.nabla[k];
        if (extra && static_cast<int>(extra->size()) == cfg.order) grad_l += (*extra)[k];
        g.adjacency[k] += apply_parametrization_jacobian(cfg.kind, params.adjacency[k].values(), op.built[k], grad_l);
      }
      return;
    }
  }
}

Gradients model_backward(const ForwardTrace& trace, const ModelParams& params, const OperatorState& op, int label,
                         double* loss) {
  Gradients g = sample_backward(trace, params, op, label, loss);
  operator_backward(params, op, g);
  return g;
}

double sample_loss(const Matrix& psi, int label, const ModelParams& params, const OperatorOptions& opts) {
  const OperatorState op = prepare_operator(params, opts);
  const ForwardTrace t = model_forward(psi, params, op);
  return classify_and_loss(t.pooled, params, label).head.loss;
}

double gram_penalty(const std::vector<Matrix>& ops, double lambda, std::vector<Matrix>* grads) {
  const std::size_t k = ops.size();
  if (grads) {
    grads->clear();
    for (const auto& o : ops) grads->push_back(Matrix::Zero(o.rows(), o.cols()));
  }
  double total = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double g = frobenius_dot(ops[a], ops[b]);
      total += 2.0 * g * g;  // ordered pairs (a,b) and (b,a)
      if (grads) {
        (*grads)[a] += 4.0 * lambda * g * ops[b];
        (*grads)[b] += 4.0 * lambda * g * ops[a];
      }
    }
  }
  return lambda * total;
}

// ---- checkpoint ----

namespace {

constexpr const char* kCheckpointTag = "cheblap-checkpoint";
constexpr int kCheckpointVersion = 1;

ConfigEcho model_echo(const ModelConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"kind", std::string(family_name(c.kind.family))},
          {"sym", c.kind.symmetric ? "1" : "0"},
          {"orth", c.orthogonal ? "1" : "0"},
          {"K", std::to_string(c.order)},
          {"channels", std::to_string(c.channels)},
          {"blocks", std::to_string(c.blocks)},
          {"final_relu", c.final_relu ? "1" : "0"},
          {"classes", std::to_string(c.num_classes)},
          {"nodes", std::to_string(c.nodes)},
          {"features", std::to_string(c.features)}};
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params, const ConfigEcho& extra) {
  ConfigEcho echo = model_echo(params.config);
  for (const auto& kv : extra) {
    const bool dup = std::any_of(echo.begin(), echo.end(), [&](const auto& e) { return e.first == kv.first; });
    if (!dup) echo.push_back(kv);
  }
  out << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  out << "config " << echo.size() << '\n';
  for (const auto& [k, v] : echo) out << k << " = " << v << '\n';
  auto& mutable_params = const_cast<ModelParams&>(params);
  std::size_t count = 0;
  mutable_params.for_each_tensor([&](const std::string&, Matrix&) { ++count; });
  out << "tensors " << count << '\n';
  mutable_params.for_each_tensor([&](const std::string& name, Matrix& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    io::write_rows(out, m);
  });
}

Checkpoint read_checkpoint(std::istream& in, const std::string& source) {
  io::LineReader reader(in, source);
  auto fail = [&](const std::string& msg) -> Error { return Error(ErrorCode::ParseError, reader.where() + ": " + msg); };

  const std::string head_text = reader.expect("checkpoint header");
  auto head = io::split_whitespace(head_text);
  if (head.size() != 2 || head[0] != kCheckpointTag) throw fail("not a checkpoint file");
  if (io::parse_integer(head[1], reader.where()) != kCheckpointVersion) throw fail("unsupported checkpoint version");

  const std::string cfg_line_text = reader.expect("config section");
  auto cfg_line = io::split_whitespace(cfg_line_text);
  if (cfg_line.size() != 2 || cfg_line[0] != "config") throw fail("expected 'config <count>'");
  const long long n_cfg = io::parse_integer(cfg_line[1], reader.where());
  Checkpoint ck;
  for (long long i = 0; i < n_cfg; ++i) {
    const std::string line = reader.expect("config entry");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    ck.config.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  auto get = [&](const std::string& key) -> std::string {
    for (const auto& [k, v] : ck.config)
      if (k == key) return v;
    throw Error(ErrorCode::ParseError, source + ": checkpoint config lacks '" + key + "'");
  };
  auto get_int = [&](const std::string& key) { return static_cast<int>(io::parse_integer(get(key), source)); };

  ModelConfig mc;
  try {
    mc.mode = parse_mode(get("mode"));
    mc.kind = {parse_kind(get("kind")).family, get_int("sym") != 0};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, source + ": " + e.what());
  }
  mc.orthogonal = get_int("orth") != 0;
  mc.order = get_int("K");
  mc.channels = get_int("channels");
  mc.blocks = get_int("blocks");
  mc.final_relu = get_int("final_relu") != 0;
  mc.num_classes = get_int("classes");
  mc.nodes = get_int("nodes");
  mc.features = get_int("features");

  // Shape skeleton; the tensor section fills in values.
  ModelParams& p = ck.params;
  p.config = mc;
  if (mc.order < 1 || mc.order > kMaxOrder || mc.blocks < 1 || mc.nodes < 1) throw fail("invalid model shape");
  p.theta.assign(mc.blocks, std::vector<Matrix>(mc.order));
  const std::size_t n_adj = mc.mode == Mode::TLL ? mc.order : (mc.mode == Mode::ML ? 0 : 1);
  p.adjacency.assign(n_adj, AdjacencyParam());

  const std::string t_line_text = reader.expect("tensor section");
  auto t_line = io::split_whitespace(t_line_text);
  if (t_line.size() != 2 || t_line[0] != "tensors") throw fail("expected 'tensors <count>'");
  const long long n_tensors = io::parse_integer(t_line[1], reader.where());
  std::map<std::string, Matrix> tensors;
  for (long long t = 0; t < n_tensors; ++t) {
    const std::string th_text = reader.expect("tensor header");
    auto th = io::split_whitespace(th_text);
    if (th.size() != 3) throw fail("expected 'name rows cols'");
    const long long rows = io::parse_integer(th[1], reader.where());
    const long long cols = io::parse_integer(th[2], reader.where());
    if (rows < 0 || cols < 0) throw fail("negative tensor shape");
    Matrix m(rows, cols);
    for (long long i = 0; i < rows; ++i) {
      const std::string vals_text = reader.expect("tensor row");
      auto vals = io::split_whitespace(vals_text);
      if (static_cast<long long>(vals.size()) != cols) throw fail("tensor row has wrong length");
      for (long long j = 0; j < cols; ++j) m(i, j) = io::parse_double(vals[j], reader.where());
    }
    tensors.emplace(std::string(th[0]), std::move(m));
  }
  std::size_t used = 0;
  p.for_each_tensor([&](const std::string& name, Matrix& m) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorCode::ParseError, source + ": missing tensor '" + name + "'");
    m = it->second;
    ++used;
  });
  if (used != tensors.size()) throw Error(ErrorCode::ParseError, source + ": unexpected extra tensors");
  auto expect_shape = [&](const Matrix& m, Index rows, Index cols, const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw Error(ErrorCode::ParseError, source + ": tensor '" + name + "' should be " + std::to_string(rows) + " x " +
                                             std::to_string(cols));
    }
  };
  for (int b = 0; b < mc.blocks; ++b) {
    for (int k = 0; k < mc.order; ++k) {
      expect_shape(p.theta[b][k], b == 0 ? mc.features : mc.channels, mc.channels,
                   "theta." + std::to_string(b) + "." + std::to_string(k));
    }
  }
  expect_shape(p.classifier_w, mc.pooled_size(), mc.num_classes, "classifier.w");
  expect_shape(p.classifier_b, 1, mc.num_classes, "classifier.b");
  expect_shape(p.handcrafted, mc.nodes, mc.nodes, "handcrafted");
  for (const auto& a : p.adjacency) expect_shape(a.values(), mc.nodes, mc.nodes, "adjacency");
  if (mc.mode == Mode::ML) expect_shape(p.ml_logits, 1, kMultiLaplacianCount, "ml.logits");
  for (auto& a : p.adjacency) a = AdjacencyParam(a.values());  // re-validate
  return ck;
}

}  // namespace cheblap
