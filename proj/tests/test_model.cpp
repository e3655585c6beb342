#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "cheblap/error.hpp"
#include "cheblap/model.hpp"
#include "oracles.hpp"

using namespace cheblap;

namespace {

ModelConfig small_config(Mode mode, LaplacianKind kind = {LaplacianFamily::Ndrw, true}, bool orth = true) {
  ModelConfig c;
  c.mode = mode;
  c.kind = kind;
  c.orthogonal = orth;
  c.order = 4;
  c.channels = 8;
  c.num_classes = 3;
  c.nodes = 5;
  c.features = 6;
  return c;
}

Matrix ring_adjacency(Index n) {
  Matrix a = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    a(i, (i + 1) % n) = 1.0;
    a((i + 1) % n, i) = 1.0;
  }
  return a;
}

// Evaluates the naive block sum_k T_k psi^T Theta_k with explicit loops.
Matrix naive_block(const Matrix& psi, const ChebyshevBasis& b, const std::vector<Matrix>& theta) {
  const Index n = psi.cols(), s = psi.rows(), c = theta[0].cols();
  Matrix out = Matrix::Zero(n, c);
  for (std::size_t k = 0; k < theta.size(); ++k)
    for (Index i = 0; i < n; ++i)
      for (Index ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (Index j = 0; j < n; ++j)
          for (Index f = 0; f < s; ++f) acc += b.terms[k](i, j) * psi(f, j) * theta[k](f, ch);
        out(i, ch) += acc;
      }
  return out;
}

double frob(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace

TEST_CASE("conv block trivial filters") {
  std::mt19937_64 rng(1);
  const Matrix psi = oracle::random_matrix(3, 4, -1, 1, rng);
  const ChebyshevBasis b = forward_basis(oracle::random_matrix(4, 4, -1, 1, rng), 1);
  const BlockTrace t = conv_block_forward(psi, b, {Matrix::Identity(3, 3)}, true);
  CHECK(t.output == psi.transpose().cwiseMax(0.0));
  const BlockTrace z = conv_block_forward(psi, b, {Matrix::Zero(3, 5)}, true);
  CHECK(z.output == Matrix::Zero(4, 5));
  CHECK_THROWS_AS(conv_block_forward(psi, b, {Matrix::Zero(2, 5)}, true), Error);
}

TEST_CASE("conv block matches a naive evaluation") {
  std::mt19937_64 rng(2);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  const ChebyshevBasis b = forward_basis(oracle::random_matrix(5, 5, -1, 1, rng), 4);
  std::vector<Matrix> theta;
  for (int k = 0; k < 4; ++k) theta.push_back(oracle::random_matrix(6, 7, -1, 1, rng));
  const BlockTrace t = conv_block_forward(psi, b, theta, true);
  CHECK((t.pre - naive_block(psi, b, theta)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("conv block backward") {
  std::mt19937_64 rng(3);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  const Matrix l = oracle::random_matrix(5, 5, -1, 1, rng);
  const ChebyshevBasis b = forward_basis(l, 4);
  std::vector<Matrix> theta;
  for (int k = 0; k < 4; ++k) theta.push_back(oracle::random_matrix(6, 7, -1, 1, rng));
  const Matrix r = oracle::random_matrix(5, 7, -1, 1, rng);

  SUBCASE("zero upstream gradient") {
    const BlockTrace t = conv_block_forward(psi, b, theta, true);
    const BlockGradients g = conv_block_backward(t, b, theta, Matrix::Zero(5, 7));
    for (int k = 0; k < 4; ++k) {
      CHECK(g.theta[k] == Matrix::Zero(6, 7));
      CHECK(g.basis.nabla[k] == Matrix::Zero(5, 5));
    }
    CHECK(g.psi == Matrix::Zero(6, 5));
  }

  SUBCASE("finite differences of <R, block>") {
    for (bool relu : {false, true}) {
      CAPTURE(relu);
      const BlockTrace t = conv_block_forward(psi, b, theta, relu);
      const BlockGradients g = conv_block_backward(t, b, theta, r);
      const Matrix fd_psi = oracle::fd_gradient(
          [&](const Matrix& x) { return frob(r, conv_block_forward(x, b, theta, relu).output); }, psi);
      CHECK(oracle::max_relative_error(g.psi, fd_psi, 1e-6) < 1e-6);
      for (int k = 0; k < 4; ++k) {
        const Matrix fd_theta = oracle::fd_gradient(
            [&](const Matrix& x) {
              auto th = theta;
              th[k] = x;
              return frob(r, conv_block_forward(psi, b, th, relu).output);
            },
            theta[k]);
        CHECK(oracle::max_relative_error(g.theta[k], fd_theta, 1e-6) < 1e-6);
        const Matrix fd_basis = oracle::fd_gradient(
            [&](const Matrix& x) {
              ChebyshevBasis bb = b;
              bb.terms[k] = x;
              return frob(r, conv_block_forward(psi, bb, theta, relu).output);
            },
            b.terms[k]);
        CHECK(oracle::max_relative_error(g.basis.nabla[k], fd_basis, 1e-6) < 1e-6);
      }
    }
  }

  SUBCASE("single term") {
    const ChebyshevBasis b1 = forward_basis(l, 1);
    const BlockTrace t = conv_block_forward(psi, b1, {theta[0]}, true);
    const BlockGradients g = conv_block_backward(t, b1, {theta[0]}, r);
    const Matrix g_pre = (t.pre.array() > 0.0).select(r, 0.0);
    CHECK((g.theta[0] - psi * g_pre).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("trace from another basis") {
    const BlockTrace t = conv_block_forward(psi, b, theta, true);
    const ChebyshevBasis other = forward_basis(2.0 * l, 4);
    CHECK_THROWS_AS(conv_block_backward(t, other, theta, r), Error);
  }
}

TEST_CASE("global average pooling") {
  Matrix m(2, 2);
  m << 1, 2, 3, 4;
  const Vector p = global_average_pool(m);
  CHECK(p(0) == 2.0);
  CHECK(p(1) == 3.0);
  Matrix c = Matrix::Constant(4, 3, 0.25);
  CHECK(global_average_pool(c) == Vector::Constant(3, 0.25));
  std::mt19937_64 rng(4);
  const Matrix r = oracle::random_matrix(6, 3, -1, 1, rng);
  std::vector<int> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix permuted(6, 3);
  for (int i = 0; i < 6; ++i) permuted.row(i) = r.row(perm[i]);
  CHECK((global_average_pool(permuted) - global_average_pool(r)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("softmax cross entropy") {
  const ClassifierResult uniform = softmax_cross_entropy(Vector::Constant(8, 0.7), 3);
  CHECK(uniform.loss == doctest::Approx(std::log(8.0)).epsilon(1e-12));
  CHECK(uniform.loss == doctest::Approx(2.0794).epsilon(1e-4));

  Vector margin = Vector::Zero(4);
  margin(2) = 800.0;
  const ClassifierResult sure = softmax_cross_entropy(margin, 2);
  CHECK(sure.loss == doctest::Approx(0.0));
  CHECK(std::isfinite(sure.loss));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector logits = oracle::random_matrix(5, 1, -3, 3, rng);
    const ClassifierResult r = softmax_cross_entropy(logits, trial % 5);
    CHECK(std::fabs(r.probabilities.sum() - 1.0) <= 1e-12);
    const Matrix fd = oracle::fd_gradient(
        [&](const Matrix& x) { return softmax_cross_entropy(Vector(x), trial % 5).loss; }, Matrix(logits));
    CHECK((Matrix(r.grad_logits) - fd).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK_THROWS_AS(softmax_cross_entropy(Vector::Zero(3), 3), Error);
  CHECK_THROWS_AS(softmax_cross_entropy(Vector::Zero(3), -1), Error);
}

TEST_CASE("ml weights live on the simplex") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const Vector w = ml_weights(oracle::random_matrix(1, kMultiLaplacianCount, -30, 30, rng));
    CHECK((w.array() >= 0.0).all());
    CHECK(std::fabs(w.sum() - 1.0) <= 1e-10);
  }
}

TEST_CASE("HL adjacency gradient is identically zero") {
  std::mt19937_64 rng(7);
  const ModelConfig cfg = small_config(Mode::HL);
  const ModelParams p = init_params(cfg, ring_adjacency(5), 3);
  const OperatorState op = prepare_operator(p);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  const Gradients g = model_backward(model_forward(psi, p, op), p, op, 1);
  REQUIRE(g.adjacency.size() == 1);
  CHECK(g.adjacency[0] == Matrix::Zero(5, 5));
}

TEST_CASE("end-to-end gradients for every trainable tensor") {
  std::mt19937_64 rng(8);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  const int label = 2;
  struct Case {
    Mode mode;
    LaplacianKind kind;
    bool orth;
    int blocks;
  };
  const std::vector<Case> cases = {
      {Mode::Learned, {LaplacianFamily::Ndrw, true}, true, 1},
      {Mode::Learned, {LaplacianFamily::Dn, false}, false, 1},
      {Mode::Learned, {LaplacianFamily::Comb, true}, true, 2},
      {Mode::ML, {LaplacianFamily::Ndrw, false}, true, 1},
      {Mode::TLL, {LaplacianFamily::Ndn, true}, false, 1},
  };
  for (const Case& c : cases) {
    CAPTURE(to_string(c.mode));
    CAPTURE(to_string(c.kind));
    CAPTURE(c.blocks);
    ModelConfig cfg = small_config(c.mode, c.kind, c.orth);
    cfg.blocks = c.blocks;
    Matrix hand = oracle::random_matrix(5, 5, 0.1, 1.0, rng);
    ModelParams p = init_params(cfg, hand, 11, 0.05);
    if (c.mode == Mode::ML) p.ml_logits = oracle::random_matrix(1, 5, -1, 1, rng);

    OperatorOptions frozen;
    const OperatorState op0 = prepare_operator(p);
    if (op0.bounds) frozen.fixed_bounds = op0.bounds;
    const OperatorState op = prepare_operator(p, frozen);
    const Gradients g = model_backward(model_forward(psi, p, op), p, op, label);

    auto loss_with = [&](auto&& mutate) {
      return [&, mutate](const Matrix& x) {
        ModelParams q = p;
        mutate(q, x);
        return sample_loss(psi, label, q, frozen);
      };
    };
    double worst = 0.0;
    auto compare = [&](const Matrix& analytic, const Matrix& fd) {
      const double floor = std::max(1e-8, 1e-6 * fd.cwiseAbs().maxCoeff());
      worst = std::max(worst, oracle::max_relative_error(analytic, fd, floor));
    };
    for (int b = 0; b < cfg.blocks; ++b)
      for (int k = 0; k < cfg.order; ++k)
        compare(g.theta[b][k], oracle::fd_gradient(loss_with([b, k](ModelParams& q, const Matrix& x) {
                                                     q.theta[b][k] = x;
                                                   }),
                                                   p.theta[b][k]));
    compare(g.classifier_w,
            oracle::fd_gradient(loss_with([](ModelParams& q, const Matrix& x) { q.classifier_w = x; }), p.classifier_w));
    compare(g.classifier_b,
            oracle::fd_gradient(loss_with([](ModelParams& q, const Matrix& x) { q.classifier_b = x; }), p.classifier_b));
    for (std::size_t i = 0; i < p.adjacency.size(); ++i) {
      compare(g.adjacency[i], oracle::fd_gradient(loss_with([i](ModelParams& q, const Matrix& x) {
                                                    q.adjacency[i] = AdjacencyParam(x);
                                                  }),
                                                  p.adjacency[i].values()));
    }
    if (c.mode == Mode::ML) {
      compare(g.ml_logits,
              oracle::fd_gradient(loss_with([](ModelParams& q, const Matrix& x) { q.ml_logits = x; }), p.ml_logits));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("duplicated sample doubles the batch gradient") {
  std::mt19937_64 rng(9);
  const ModelConfig cfg = small_config(Mode::Learned);
  const ModelParams p = init_params(cfg, ring_adjacency(5), 5);
  const OperatorState op = prepare_operator(p);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  Gradients one = sample_backward(model_forward(psi, p, op), p, op, 0);
  Gradients two = Gradients::zeros_like(p);
  two += one;
  two += one;
  operator_backward(p, op, one);
  operator_backward(p, op, two);
  CHECK(two.adjacency[0] == 2.0 * one.adjacency[0]);
  CHECK(two.theta[0][1] == 2.0 * one.theta[0][1]);
}

TEST_CASE("loss is invariant to a consistent node permutation") {
  std::mt19937_64 rng(10);
  const ModelConfig cfg = small_config(Mode::Learned);
  const Matrix hand = oracle::random_matrix(5, 5, 0.0, 1.0, rng);
  ModelParams p = init_params(cfg, hand, 6);
  const Matrix psi = oracle::random_matrix(6, 5, -1, 1, rng);
  std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::PermutationMatrix<Eigen::Dynamic> pm(5);
  for (int i = 0; i < 5; ++i) pm.indices()(i) = perm[i];
  ModelParams q = p;
  q.adjacency[0] = AdjacencyParam(pm * p.adjacency[0].values() * pm.transpose());
  q.handcrafted = pm * p.handcrafted * pm.transpose();
  const Matrix psi_perm = psi * pm.transpose();
  CHECK(std::fabs(sample_loss(psi, 1, p) - sample_loss(psi_perm, 1, q)) <= 1e-10);
}

TEST_CASE("order warning") {
  ModelConfig cfg = small_config(Mode::Learned);
  CHECK_FALSE(order_warning(cfg).has_value());
  cfg.order = 6;
  CHECK(order_warning(cfg).has_value());
}

TEST_CASE("Gram penalty gradient") {
  std::mt19937_64 rng(11);
  std::vector<Matrix> ops;
  for (int k = 0; k < 3; ++k) ops.push_back(oracle::random_matrix(4, 4, -1, 1, rng));
  std::vector<Matrix> grads;
  const double v = gram_penalty(ops, 0.3, &grads);
  double expect = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      if (a != b) expect += std::pow(frob(ops[a], ops[b]), 2);
  CHECK(v == doctest::Approx(0.3 * expect));
  for (int k = 0; k < 3; ++k) {
    const Matrix fd = oracle::fd_gradient(
        [&](const Matrix& x) {
          auto o = ops;
          o[k] = x;
          return gram_penalty(o, 0.3, nullptr);
        },
        ops[k]);
    CHECK(oracle::max_relative_error(grads[k], fd, 1e-6) < 1e-6);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  for (Mode mode : {Mode::HL, Mode::ML, Mode::TLL, Mode::Learned}) {
    CAPTURE(to_string(mode));
    ModelConfig cfg = small_config(mode);
    cfg.blocks = 2;
    ModelParams p = init_params(cfg, ring_adjacency(5), 21, 0.013);
    if (mode == Mode::ML) p.ml_logits << 0.1, -1e-300, 3.0e17, 1.0 / 3.0, -0.0;
    std::stringstream ss;
    write_checkpoint(ss, p, {{"seed", "21"}, {"mode", "ignored duplicate"}});
    const std::string text = ss.str();
    const Checkpoint ck = read_checkpoint(ss, "mem");
    ModelParams q = ck.params;
    CHECK(q.config.mode == mode);
    CHECK(q.config.blocks == 2);
    std::vector<Matrix> a, b;
    p.for_each_tensor([&](const std::string&, Matrix& m) { a.push_back(m); });
    q.for_each_tensor([&](const std::string&, Matrix& m) { b.push_back(m); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].size() == b[i].size());
      CHECK(std::memcmp(a[i].data(), b[i].data(), sizeof(double) * a[i].size()) == 0);
    }
    std::stringstream again;
    write_checkpoint(again, q, ck.config);
    CHECK(again.str() == text);
  }
}

TEST_CASE("truncated or malformed checkpoints are parse errors") {
  ModelParams p = init_params(small_config(Mode::Learned), ring_adjacency(5), 1);
  std::stringstream ss;
  write_checkpoint(ss, p, {});
  const std::string text = ss.str();
  for (std::size_t cut : {std::size_t{10}, text.size() / 2, text.size() - 30}) {
    std::stringstream in(text.substr(0, cut));
    try {
      read_checkpoint(in, "ck");
      FAIL("expected ParseError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
    }
  }
  std::string wrong = text;
  wrong.replace(wrong.find("theta.0.0 6 8"), 13, "theta.0.0 6 7");
  std::stringstream bad(wrong);
  CHECK_THROWS_AS(read_checkpoint(bad, "ck"), Error);
}
