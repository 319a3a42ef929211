#include <cmath>

#include "doctest.h"
#include "eftr/errors.hpp"
#include "eftr/netcore.hpp"

using namespace eftr;

namespace {

GraphSpec mlp(std::vector<int> dims, Activation hidden, Activation last) {
  GraphSpec g;
  g.name = "g";
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    g.layers.push_back({LayerKind::Dense, dims[i], dims[i + 1], i + 2 == dims.size() ? last : hidden, {}});
  return g;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// 0.5 * sum of squared outputs, with backprop through the graph.
LossFunction squared_output_loss(const Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd* doses) {
  return [&graph, X, doses](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    Graph::Cache cache;
    const Eigen::MatrixXd out = graph.forward(p, X, doses, &cache);
    if (grad) {
      grad->setZero(p.size());
      graph.backward(p, cache, out, *grad);
    }
    return 0.5 * out.squaredNorm();
  };
}

}  // namespace

TEST_CASE("activations") {
  CHECK(activate(Activation::ReLU, -1.0) == 0.0);
  CHECK(activate(Activation::ReLU, 2.0) == 2.0);
  CHECK(activate(Activation::Sigmoid, 0.0) == 0.5);
  CHECK(activate(Activation::Exp, 0.0) == 1.0);
  CHECK(activate(Activation::Identity, -3.0) == -3.0);
  CHECK(activate(Activation::Softplus, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(activate(Activation::Softplus, 1000.0) == doctest::Approx(1000.0));
  for (Activation act : {Activation::Sigmoid, Activation::Exp, Activation::Identity, Activation::Softplus}) {
    for (double t : {-2.0, -0.3, 0.7, 3.0}) {
      const double h = 1e-6;
      const double fd = (activate(act, t + h) - activate(act, t - h)) / (2 * h);
      CHECK(activation_derivative(act, t, activate(act, t)) == doctest::Approx(fd).epsilon(1e-7));
    }
    CHECK(activation_from_string(to_string(act)) == act);
  }
  CHECK_THROWS_AS(activation_from_string("tanhh"), ConfigError);
}

TEST_CASE("param store slices") {
  ParamStore s;
  const Slice a = s.add("a", 3);
  const Slice b = s.add("b", 2);
  CHECK(a.offset == 0);
  CHECK(b.offset == 3);
  CHECK(s.size() == 5);
  s.segment("b").setConstant(7.0);
  CHECK(s.values()(4) == 7.0);
  CHECK(s.values()(0) == 0.0);
  CHECK(s.contains("a"));
  CHECK_FALSE(s.contains("c"));
  CHECK_THROWS_AS(s.add("a", 1), ConfigError);
  CHECK_THROWS_AS(s.slice("c"), ConfigError);
  CHECK(s.entries().size() == 2);
}

TEST_CASE("graph validation") {
  ParamStore s;
  GraphSpec bad = mlp({3, 4, 2}, Activation::ReLU, Activation::Identity);
  bad.layers[1].in_dim = 5;
  CHECK_THROWS_AS(Graph(bad, s), ConfigError);
  CHECK_THROWS_AS(Graph(GraphSpec{"empty", {}}, s), ConfigError);
  const Graph g(mlp({3, 4, 2}, Activation::ReLU, Activation::Identity), s);
  CHECK(s.size() == 3 * 4 + 4 + 4 * 2 + 2);
  CHECK_THROWS_AS(g.forward(s.values(), Eigen::MatrixXd::Zero(2, 5), nullptr), ConfigError);
}

TEST_CASE("zero network outputs zero") {
  ParamStore s;
  const Graph g(mlp({4, 5, 3}, Activation::Identity, Activation::Identity), s);
  Eigen::VectorXd x(4);
  x << 1, -2, 3, 0.5;
  CHECK(forward(g, s, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("varying-coefficient layer with W(a) = a") {
  ParamStore s;
  GraphSpec spec{"vc", {{LayerKind::VaryingCoeffDense, 1, 1, Activation::Identity, {}}}};
  spec.layers[0].basis.kind = BasisConfig::Kind::Poly;
  spec.layers[0].basis.poly_size = 2;
  const Graph g(spec, s);
  s.segment("vc.0.weight") << 0.0, 1.0;
  Eigen::VectorXd x(1);
  x << 3.0;
  CHECK(forward(g, s, x, 0.5)(0) == doctest::Approx(1.5));
  CHECK(g.varying_weight(s.values(), 0, 0.25)(0, 0) == doctest::Approx(0.25));
  CHECK_THROWS_AS(forward(g, s, x), ConfigError);
}

TEST_CASE("dose-constant initialization") {
  for (BasisConfig::Kind kind : {BasisConfig::Kind::Spline, BasisConfig::Kind::Poly}) {
    ParamStore s;
    GraphSpec spec{"vc", {{LayerKind::VaryingCoeffDense, 3, 4, Activation::ReLU, {}},
                          {LayerKind::VaryingCoeffDense, 4, 1, Activation::Identity, {}}}};
    for (auto& l : spec.layers) l.basis.kind = kind;
    const Graph g(spec, s);
    Rng rng(5);
    g.initialize(s.values(), rng);
    Eigen::VectorXd x(3);
    x << 0.2, -0.4, 1.1;
    CHECK(forward(g, s, x, 0.2)(0) == doctest::Approx(forward(g, s, x, 0.8)(0)).epsilon(1e-12));
  }
}

TEST_CASE("initializer range and determinism") {
  ParamStore s1, s2;
  const Graph g1(mlp({6, 50, 1}, Activation::ReLU, Activation::Identity), s1);
  const Graph g2(mlp({6, 50, 1}, Activation::ReLU, Activation::Identity), s2);
  Rng r1(9), r2(9);
  g1.initialize(s1.values(), r1);
  g2.initialize(s2.values(), r2);
  CHECK((s1.values() - s2.values()).norm() == 0.0);
  CHECK(s1.segment("g.0.weight").cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 6));
  CHECK(s1.segment("g.1.weight").cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 50));
  CHECK(s1.segment("g.0.bias").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loss_and_grad reductions") {
  const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  const LossFunction constant = [](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    if (g) g->setZero(q.size());
    return 3.0;
  };
  CHECK(loss_and_grad(constant, p).grad.cwiseAbs().maxCoeff() == 0.0);
  const LossFunction quad = [](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    if (g) *g = q;
    return 0.5 * q.squaredNorm();
  };
  const LossAndGrad r = loss_and_grad(quad, p);
  CHECK((r.grad - p).norm() == 0.0);
  CHECK(r.value == doctest::Approx(0.5 * p.squaredNorm()));
  const LossFunction bad = [](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    if (g) {
      g->setZero(q.size());
      (*g)(2) = std::nan("");
    }
    return 1.0;
  };
  try {
    loss_and_grad(bad, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.index() == 2);
  }
  const LossFunction inf = [](const Eigen::VectorXd&, Eigen::VectorXd*) { return INFINITY; };
  CHECK_THROWS_AS(loss_and_grad(inf, p), NumericError);
}

TEST_CASE("graph backprop matches finite differences") {
  Rng rng(11);
  for (Activation act : {Activation::Sigmoid, Activation::Softplus, Activation::Identity}) {
    ParamStore s;
    const Graph g(mlp({3, 5, 4, 2}, act, Activation::Exp), s);
    g.initialize(s.values(), rng);
    s.values() += 0.1 * random_matrix(s.size(), 1, rng);
    const Eigen::MatrixXd X = random_matrix(7, 3, rng);
    const GradCheckReport rep = grad_check(squared_output_loss(g, X, nullptr), s.values());
    CHECK(rep.max_rel_err <= 1e-4);
  }
}

TEST_CASE("varying-coefficient backprop matches finite differences") {
  Rng rng(12);
  ParamStore s;
  GraphSpec spec{"vc", {{LayerKind::VaryingCoeffDense, 3, 4, Activation::Softplus, {}},
                        {LayerKind::VaryingCoeffDense, 4, 1, Activation::Sigmoid, {}}}};
  const Graph g(spec, s);
  s.values() = 0.5 * random_matrix(s.size(), 1, rng);
  const Eigen::MatrixXd X = random_matrix(9, 3, rng);
  const Eigen::VectorXd doses = (random_matrix(9, 1, rng).array().abs() / 3.0).min(1.0).matrix();
  const GradCheckReport rep = grad_check(squared_output_loss(g, X, &doses), s.values());
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("input gradient") {
  Rng rng(13);
  ParamStore s;
  const Graph g(mlp({2, 3, 1}, Activation::Sigmoid, Activation::Identity), s);
  g.initialize(s.values(), rng);
  Eigen::MatrixXd X = random_matrix(1, 2, rng);
  Graph::Cache cache;
  const Eigen::MatrixXd out = g.forward(s.values(), X, nullptr, &cache);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(s.size());
  const Eigen::MatrixXd dX = g.backward(s.values(), cache, Eigen::MatrixXd::Ones(1, 1), grad);
  for (int j = 0; j < 2; ++j) {
    Eigen::MatrixXd up = X, down = X;
    up(0, j) += 1e-6;
    down(0, j) -= 1e-6;
    const double fd = (g.forward(s.values(), up, nullptr)(0, 0) - g.forward(s.values(), down, nullptr)(0, 0)) / 2e-6;
    CHECK(dX(0, j) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("unused parameter block gets an exactly zero gradient") {
  Rng rng(14);
  ParamStore s;
  const Graph used(mlp({2, 3, 1}, Activation::Sigmoid, Activation::Identity), s);
  GraphSpec other = mlp({2, 2}, Activation::Identity, Activation::Identity);
  other.name = "unused";
  const Graph unused(other, s);
  used.initialize(s.values(), rng);
  unused.initialize(s.values(), rng);
  const Eigen::MatrixXd X = random_matrix(4, 2, rng);
  const LossAndGrad r = loss_and_grad(squared_output_loss(used, X, nullptr), s.values());
  CHECK(r.grad.segment(s.slice("unused.0.weight").offset, 4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(r.grad.segment(s.slice("unused.0.bias").offset, 2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("grad_check flags a wrong gradient") {
  const LossFunction wrong = [](const Eigen::VectorXd& q, Eigen::VectorXd* g) {
    if (g) *g = 2.0 * q;
    return 0.5 * q.squaredNorm();
  };
  const GradCheckReport rep = grad_check(wrong, Eigen::VectorXd::Ones(3));
  CHECK_FALSE(rep.passed);
  CHECK(rep.max_rel_err == doctest::Approx(0.5));
}

TEST_CASE("optimizers") {
  SUBCASE("sgd single step") {
    Optimizer opt({OptimizerKind::SGD, 0.1}, 1);
    Eigen::VectorXd p = Eigen::VectorXd::Ones(1);
    opt.step(p, p);
    CHECK(p(0) == doctest::Approx(0.9));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("adam converges on p^2 / 2") {
    OptimizerConfig c;
    c.lr = 0.05;
    Optimizer opt(c, 1);
    Eigen::VectorXd p = Eigen::VectorXd::Ones(1);
    for (int i = 0; i < 500; ++i) {
      const Eigen::VectorXd g = p;
      opt.step(p, g);
    }
    CHECK(std::abs(p(0)) <= 1e-3);
  }
  SUBCASE("zero gradient leaves params alone") {
    for (OptimizerKind k : {OptimizerKind::SGD, OptimizerKind::SGDMomentum, OptimizerKind::Adam}) {
      OptimizerConfig c;
      c.kind = k;
      Optimizer opt(c, 3);
      Eigen::VectorXd p(3);
      p << 1, -2, 3;
      const Eigen::VectorXd before = p;
      opt.step(p, Eigen::VectorXd::Zero(3));
      CHECK((p - before).norm() == 0.0);
    }
  }
  SUBCASE("momentum accumulates") {
    OptimizerConfig c;
    c.kind = OptimizerKind::SGDMomentum;
    c.lr = 0.1;
    c.momentum = 0.5;
    Optimizer opt(c, 1);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
    opt.step(p, Eigen::VectorXd::Ones(1));
    opt.step(p, Eigen::VectorXd::Ones(1));
    CHECK(p(0) == doctest::Approx(-0.1 - 0.15));
  }
  SUBCASE("names") {
    for (OptimizerKind k : {OptimizerKind::SGD, OptimizerKind::SGDMomentum, OptimizerKind::Adam})
      CHECK(optimizer_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(optimizer_from_string("lbfgs"), ConfigError);
  }
}
