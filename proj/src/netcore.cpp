#include "eftr/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eftr/errors.hpp"

namespace eftr {

std::string to_string(Activation act) {
  switch (act) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Exp: return "exp";
    case Activation::Identity: return "identity";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "exp") return Activation::Exp;
  if (name == "identity") return Activation::Identity;
  if (name == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation '" + name + "'");
}

double activate(Activation act, double z) {
  switch (act) {
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::Sigmoid:
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      else {
        const double e = std::exp(z);
        return e / (1.0 + e);
      }
    case Activation::Exp: return std::exp(z);
    case Activation::Identity: return z;
    case Activation::Softplus: return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  }
  return z;
}

double activation_derivative(Activation act, double pre, double post) {
  switch (act) {
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return post * (1.0 - post);
    case Activation::Exp: return post;
    case Activation::Identity: return 1.0;
    case Activation::Softplus: return -std::expm1(-post);  // sigmoid(pre)
  }
  return 1.0;
}

Slice ParamStore::add(const std::string& name, Eigen::Index size) {
  if (contains(name)) throw ConfigError("duplicate parameter slice '" + name + "'");
  Slice s{values_.size(), size};
  Eigen::VectorXd grown = Eigen::VectorXd::Zero(values_.size() + size);
  grown.head(values_.size()) = values_;
  values_ = std::move(grown);
  index_[name] = entries_.size();
  entries_.emplace_back(name, s);
  return s;
}

const Slice& ParamStore::slice(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter slice named '" + name + "'");
  return entries_[it->second].second;
}

void GraphSpec::validate() const {
  if (layers.empty()) throw ConfigError("graph '" + name + "' has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim <= 0 || layers[i].out_dim <= 0)
      throw ConfigError("graph '" + name + "': layer " + std::to_string(i) + " has a non-positive dimension");
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim)
      throw ConfigError("graph '" + name + "': layer " + std::to_string(i) + " input dim " +
                        std::to_string(layers[i].in_dim) + " != previous output dim " +
                        std::to_string(layers[i - 1].out_dim));
  }
}

bool GraphSpec::needs_dose() const {
  for (const auto& l : layers)
    if (l.kind == LayerKind::VaryingCoeffDense) return true;
  return false;
}

Graph::Graph(GraphSpec spec, ParamStore& store) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const std::string prefix = spec_.name + "." + std::to_string(i);
    Eigen::Index blocks = 1;
    bases_.push_back(l.basis.build());
    if (l.kind == LayerKind::VaryingCoeffDense) blocks = basis_size(bases_.back());
    weight_.push_back(store.add(prefix + ".weight", blocks * l.out_dim * l.in_dim));
    bias_.push_back(store.add(prefix + ".bias", blocks * l.out_dim));
  }
}

void Graph::initialize(Eigen::VectorXd& params, Rng& rng) const {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const double bound = std::sqrt(6.0 / l.in_dim);
    std::uniform_real_distribution<double> u(-bound, bound);
    const Eigen::Index block = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
    Eigen::VectorXd w(block);
    for (Eigen::Index j = 0; j < block; ++j) w(j) = u(rng);
    params.segment(bias_[i].offset, bias_[i].size).setZero();
    auto weights = params.segment(weight_[i].offset, weight_[i].size);
    if (l.kind == LayerKind::Dense) {
      weights = w;
      continue;
    }
    // Dose-constant start: identical blocks under a partition of unity, or the
    // constant monomial alone for polynomial bases.
    const Eigen::Index blocks = weight_[i].size / block;
    const bool poly = std::holds_alternative<PolyBasis>(bases_[i]);
    for (Eigen::Index b = 0; b < blocks; ++b) {
      if (poly && b > 0)
        weights.segment(b * block, block).setZero();
      else
        weights.segment(b * block, block) = w;
    }
  }
}

Eigen::MatrixXd Graph::forward(const Eigen::VectorXd& params, const Eigen::MatrixXd& X, const Eigen::VectorXd* doses,
                               Cache* cache) const {
  if (X.cols() != spec_.in_dim())
    throw ConfigError("graph '" + spec_.name + "': input has " + std::to_string(X.cols()) + " columns, expected " +
                      std::to_string(spec_.in_dim()));
  if (spec_.needs_dose() && (doses == nullptr || doses->size() != X.rows()))
    throw ConfigError("graph '" + spec_.name + "': varying-coefficient layer needs one dose per row");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->post.clear();
    cache->basis_rows.clear();
  }
  Eigen::MatrixXd h = X;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    const Eigen::Index n = h.rows();
    Eigen::MatrixXd pre;
    Eigen::MatrixXd phi;
    if (l.kind == LayerKind::Dense) {
      Eigen::Map<const Eigen::MatrixXd> W(params.data() + weight_[i].offset, l.out_dim, l.in_dim);
      Eigen::Map<const Eigen::VectorXd> b(params.data() + bias_[i].offset, l.out_dim);
      pre = h * W.transpose();
      pre.rowwise() += b.transpose();
    } else {
      phi = eval_basis_rows(bases_[i], *doses);
      pre = Eigen::MatrixXd::Zero(n, l.out_dim);
      const Eigen::Index block = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
      for (Eigen::Index k = 0; k < phi.cols(); ++k) {
        Eigen::Map<const Eigen::MatrixXd> W(params.data() + weight_[i].offset + k * block, l.out_dim, l.in_dim);
        Eigen::Map<const Eigen::VectorXd> b(params.data() + bias_[i].offset + k * l.out_dim, l.out_dim);
        Eigen::MatrixXd part = h * W.transpose();
        part.rowwise() += b.transpose();
        pre.noalias() += phi.col(k).asDiagonal() * part;
      }
    }
    Eigen::MatrixXd post = pre.unaryExpr([act = l.activation](double z) { return activate(act, z); });
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(std::move(pre));
      cache->post.push_back(post);
      cache->basis_rows.push_back(std::move(phi));
    }
    h = std::move(post);
  }
  return h;
}

Eigen::MatrixXd Graph::backward(const Eigen::VectorXd& params, const Cache& cache, const Eigen::MatrixXd& d_out,
                                Eigen::VectorXd& grad) const {
  Eigen::MatrixXd d = d_out;
  for (std::size_t ii = spec_.layers.size(); ii-- > 0;) {
    const LayerSpec& l = spec_.layers[ii];
    const Eigen::MatrixXd& pre = cache.pre[ii];
    const Eigen::MatrixXd& post = cache.post[ii];
    const Eigen::MatrixXd& in = cache.inputs[ii];
    Eigen::MatrixXd d_pre(pre.rows(), pre.cols());
    for (Eigen::Index c = 0; c < pre.cols(); ++c)
      for (Eigen::Index r = 0; r < pre.rows(); ++r)
        d_pre(r, c) = d(r, c) * activation_derivative(l.activation, pre(r, c), post(r, c));
    if (l.kind == LayerKind::Dense) {
      Eigen::Map<const Eigen::MatrixXd> W(params.data() + weight_[ii].offset, l.out_dim, l.in_dim);
      Eigen::Map<Eigen::MatrixXd> dW(grad.data() + weight_[ii].offset, l.out_dim, l.in_dim);
      Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_[ii].offset, l.out_dim);
      dW.noalias() += d_pre.transpose() * in;
      db += d_pre.colwise().sum().transpose();
      d = d_pre * W;
    } else {
      const Eigen::MatrixXd& phi = cache.basis_rows[ii];
      const Eigen::Index block = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
      Eigen::MatrixXd d_in = Eigen::MatrixXd::Zero(in.rows(), in.cols());
      for (Eigen::Index k = 0; k < phi.cols(); ++k) {
        Eigen::Map<const Eigen::MatrixXd> W(params.data() + weight_[ii].offset + k * block, l.out_dim, l.in_dim);
        Eigen::Map<Eigen::MatrixXd> dW(grad.data() + weight_[ii].offset + k * block, l.out_dim, l.in_dim);
        Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_[ii].offset + k * l.out_dim, l.out_dim);
        const Eigen::MatrixXd g = phi.col(k).asDiagonal() * d_pre;
        dW.noalias() += g.transpose() * in;
        db += g.colwise().sum().transpose();
        d_in.noalias() += g * W;
      }
      d = std::move(d_in);
    }
  }
  return d;
}

Eigen::MatrixXd Graph::varying_weight(const Eigen::VectorXd& params, std::size_t layer, double a) const {
  const LayerSpec& l = spec_.layers.at(layer);
  if (l.kind != LayerKind::VaryingCoeffDense) throw ConfigError("layer is not varying-coefficient");
  const Eigen::VectorXd phi = eval_basis(bases_[layer], a);
  const Eigen::Index block = static_cast<Eigen::Index>(l.out_dim) * l.in_dim;
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(l.out_dim, l.in_dim);
  for (Eigen::Index k = 0; k < phi.size(); ++k)
    W += phi(k) * Eigen::Map<const Eigen::MatrixXd>(params.data() + weight_[layer].offset + k * block, l.out_dim,
                                                     l.in_dim);
  return W;
}

Eigen::VectorXd forward(const Graph& graph, const ParamStore& params, const Eigen::VectorXd& x,
                        std::optional<double> a) {
  if (a.has_value() != graph.spec().needs_dose())
    throw ConfigError("dose must be supplied iff the graph has a varying-coefficient layer");
  Eigen::MatrixXd X = x.transpose();
  if (a) {
    Eigen::VectorXd d = Eigen::VectorXd::Constant(1, *a);
    return graph.forward(params.values(), X, &d).row(0).transpose();
  }
  return graph.forward(params.values(), X, nullptr).row(0).transpose();
}

LossAndGrad loss_and_grad(const LossFunction& loss, const Eigen::VectorXd& params) {
  LossAndGrad out;
  out.value = loss(params, &out.grad);
  if (!std::isfinite(out.value)) throw NumericError("non-finite loss");
  for (Eigen::Index i = 0; i < out.grad.size(); ++i)
    if (!std::isfinite(out.grad(i))) throw NumericError("non-finite gradient coordinate", static_cast<long>(i));
  return out;
}

GradCheckReport grad_check(const LossFunction& loss, const Eigen::VectorXd& params, double step, double tol) {
  Eigen::VectorXd grad;
  loss(params, &grad);
  GradCheckReport rep;
  Eigen::VectorXd p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p(i);
    p(i) = orig + step;
    const double up = loss(p, nullptr);
    p(i) = orig - step;
    const double down = loss(p, nullptr);
    p(i) = orig;
    const double fd = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad(i)), std::abs(fd), 1e-4});
    const double rel = std::abs(grad(i) - fd) / denom;
    if (rel > rep.max_rel_err || !std::isfinite(rel)) {
      rep.max_rel_err = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
      rep.worst_coordinate = i;
      rep.analytic = grad(i);
      rep.numeric = fd;
    }
  }
  rep.passed = rep.max_rel_err <= tol;
  return rep;
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::SGD: return "sgd";
    case OptimizerKind::SGDMomentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "?";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::SGD;
  if (name == "momentum") return OptimizerKind::SGDMomentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig cfg, Eigen::Index size)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

void Optimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  switch (cfg_.kind) {
    case OptimizerKind::SGD:
      params -= cfg_.lr * grad;
      break;
    case OptimizerKind::SGDMomentum:
      m_ = cfg_.momentum * m_ + grad;
      params -= cfg_.lr * m_;
      break;
    case OptimizerKind::Adam: {
      m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
      v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      params.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
      break;
    }
  }
}

}  // namespace eftr
