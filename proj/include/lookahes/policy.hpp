#ifndef LOOKAHES_POLICY_HPP
#define LOOKAHES_POLICY_HPP

// The variational policy xi: (x_{1:t}, y_{1:t}) -> x_{t+1}: a two-layer
// encoder, a single-layer GRU (hidden 64, one combined bias per gate), and a
// three-layer decoder with ELU activations.  The continuous head squashes
// through a logistic; the discrete head emits per-dimension logits resolved
// by a straight-through argmax.  Rollouts are recorded on a static tape so
// the inner Adam loop re-runs forward/backward with no graph rebuilding.

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lookahes/core.hpp"
#include "lookahes/costs.hpp"
#include "lookahes/pathwise.hpp"
#include "lookahes/rng.hpp"
#include "lookahes/sobol.hpp"
#include "lookahes/tape.hpp"

namespace lookahes {

enum class PolicyHead { continuous, discrete };

struct PolicyShape {
  int dim = 2;
  int hidden = 64;
  PolicyHead head = PolicyHead::continuous;
  int categories = 0;  // discrete head: C cells per dimension

  // Encoder input width: (dim+1) continuous, (C+1) after the shared
  // embedding pooling for the discrete head.
  int encoder_in() const {
    return head == PolicyHead::continuous ? dim + 1 : categories + 1;
  }
  // Decoder output width: dim coordinates, or dim*C logits.
  int decoder_out() const {
    return head == PolicyHead::continuous ? dim : dim * categories;
  }
  // Width of the raw query representation fed back into the policy.
  int query_rows() const {
    return head == PolicyHead::continuous ? dim : dim * categories;
  }
};

struct PolicyParams {
  PolicyShape shape;
  // Discrete-head shared embedding (unused for continuous).
  MatrixXd Wemb, bemb;
  // Encoder.
  MatrixXd We1, be1, We2, be2;
  // GRU gates: update z, reset r, candidate n (one combined bias per gate):
  //   z = sigmoid(Wz e + Uz h + bz)
  //   r = sigmoid(Wr e + Ur h + br)
  //   n = tanh(Wn e + r .* (Un h) + bn)
  //   h' = (1 - z) .* n + z .* h
  MatrixXd Wz, Uz, bz, Wr, Ur, br, Wn, Un, bn;
  // Decoder.
  MatrixXd Wd1, bd1, Wd2, bd2, Wd3, bd3;

  // Matrices in the canonical flatten order (also the init draw order).
  std::vector<const MatrixXd*> matrices() const {
    std::vector<const MatrixXd*> v;
    if (shape.head == PolicyHead::discrete) {
      v.push_back(&Wemb);
      v.push_back(&bemb);
    }
    for (const MatrixXd* m : {&We1, &be1, &We2, &be2, &Wz, &Uz, &bz, &Wr, &Ur,
                              &br, &Wn, &Un, &bn, &Wd1, &bd1, &Wd2, &bd2, &Wd3,
                              &bd3})
      v.push_back(m);
    return v;
  }
  std::vector<MatrixXd*> matrices() {
    std::vector<MatrixXd*> v;
    if (shape.head == PolicyHead::discrete) {
      v.push_back(&Wemb);
      v.push_back(&bemb);
    }
    for (MatrixXd* m : {&We1, &be1, &We2, &be2, &Wz, &Uz, &bz, &Wr, &Ur, &br,
                        &Wn, &Un, &bn, &Wd1, &bd1, &Wd2, &bd2, &Wd3, &bd3})
      v.push_back(m);
    return v;
  }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (const MatrixXd* m : matrices()) n += m->size();
    return n;
  }

  VectorXd flatten() const {
    VectorXd flat(param_count());
    Eigen::Index at = 0;
    for (const MatrixXd* m : matrices()) {
      flat.segment(at, m->size()) =
          Eigen::Map<const VectorXd>(m->data(), m->size());
      at += m->size();
    }
    return flat;
  }

  void unflatten(const VectorXd& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("PolicyParams::unflatten: size mismatch");
    Eigen::Index at = 0;
    for (MatrixXd* m : matrices()) {
      Eigen::Map<VectorXd>(m->data(), m->size()) = flat.segment(at, m->size());
      at += m->size();
    }
  }
};

// Closed-form parameter count (used to assert the architecture wiring).
inline Eigen::Index policy_param_count(const PolicyShape& s) {
  const Eigen::Index h = s.hidden;
  const Eigen::Index in = s.encoder_in();
  const Eigen::Index out = s.decoder_out();
  Eigen::Index n = 0;
  if (s.head == PolicyHead::discrete)
    n += static_cast<Eigen::Index>(s.categories) * s.categories + s.categories;
  n += in * h + h + h * h + h;              // encoder
  n += 3 * (h * h + h * h + h);             // GRU gates
  n += h * h + h + h * h + h + out * h + out;  // decoder
  return n;
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in flatten order
// (column-major within each matrix); biases zero.
inline PolicyParams init_policy(int dim, int hidden, PolicyHead head,
                                SeedStream stream, int categories = 0) {
  if (dim < 1) throw std::invalid_argument("init_policy: dim must be >= 1");
  if (head == PolicyHead::discrete && categories < 2)
    throw std::invalid_argument("init_policy: discrete head needs categories >= 2");
  PolicyParams p;
  p.shape = PolicyShape{dim, hidden, head, categories};
  const int h = hidden;
  const int in = p.shape.encoder_in();
  const int out = p.shape.decoder_out();
  auto weight = [&](MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = stream.uniform(-s, s);
  };
  auto bias = [&](MatrixXd& m, int rows) { m = MatrixXd::Zero(rows, 1); };
  if (head == PolicyHead::discrete) {
    weight(p.Wemb, categories, categories);
    bias(p.bemb, categories);
  } else {
    p.Wemb.resize(0, 0);
    p.bemb.resize(0, 0);
  }
  weight(p.We1, h, in);
  bias(p.be1, h);
  weight(p.We2, h, h);
  bias(p.be2, h);
  weight(p.Wz, h, h);
  weight(p.Uz, h, h);
  bias(p.bz, h);
  weight(p.Wr, h, h);
  weight(p.Ur, h, h);
  bias(p.br, h);
  weight(p.Wn, h, h);
  weight(p.Un, h, h);
  bias(p.bn, h);
  weight(p.Wd1, h, h);
  bias(p.bd1, h);
  weight(p.Wd2, h, h);
  bias(p.bd2, h);
  weight(p.Wd3, out, h);
  bias(p.bd3, out);
  return p;
}

inline PolicyParams zero_policy(int dim, int hidden, PolicyHead head,
                                int categories = 0) {
  PolicyParams p = init_policy(dim, hidden, head, SeedStream(0), categories);
  for (MatrixXd* m : p.matrices()) m->setZero();
  return p;
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamState {
  VectorXd m, v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState make(Eigen::Index n, double lr_) {
    AdamState s;
    s.m = VectorXd::Zero(n);
    s.v = VectorXd::Zero(n);
    s.lr = lr_;
    return s;
  }
};

inline void adam_step(VectorXd& params, const VectorXd& grads, AdamState& s) {
  if (params.size() != grads.size() || params.size() != s.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  s.t += 1;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params.array() -= s.lr * (s.m.array() / bc1) /
                    ((s.v.array() / bc2).sqrt() + s.eps);
}

// ---------------------------------------------------------------------------
// von Mises-Fisher restart perturbation.

// Unit vector uniform on the sphere S^{dim-1}.
inline VectorXd uniform_sphere(int dim, SeedStream& stream) {
  VectorXd v(dim);
  double norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = stream.normal();
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

// Unit direction from vMF(mean, kappa) by Wood's rejection scheme.
inline VectorXd vmf_direction(const VectorXd& mean, double kappa,
                              SeedStream& stream) {
  const int p = static_cast<int>(mean.size());
  if (p == 1) return VectorXd::Constant(1, stream.uniform() < 0.5 ? -1.0 : 1.0);
  if (kappa <= 0.0) return uniform_sphere(p, stream);
  const double b =
      (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + (p - 1.0) * (p - 1.0))) /
      (p - 1.0);
  const double x0 = (1.0 - b) / (1.0 + b);
  const double c = kappa * x0 + (p - 1.0) * std::log(1.0 - x0 * x0);
  double w = 0.0;
  for (;;) {
    const double z = stream.beta(0.5 * (p - 1.0), 0.5 * (p - 1.0));
    w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
    const double u = 1.0 - stream.uniform();  // (0, 1]
    if (kappa * w + (p - 1.0) * std::log(1.0 - x0 * w) - c >= std::log(u)) break;
  }
  VectorXd vperp = uniform_sphere(p - 1, stream);
  VectorXd draw(p);
  draw.head(p - 1) = std::sqrt(std::max(1.0 - w * w, 0.0)) * vperp;
  draw[p - 1] = w;
  // Householder reflection mapping e_p onto the mean direction.
  VectorXd mu = mean.normalized();
  VectorXd u = -mu;
  u[p - 1] += 1.0;  // e_p - mu
  const double un2 = u.squaredNorm();
  if (un2 < 1e-16) return draw;  // mean is already e_p
  return draw - (2.0 * u.dot(draw) / un2) * u;
}

// x + magnitude * u with u ~ vMF(mean, kappa), clamped to [0,1]^dim.  An
// empty mean (or kappa = 0) falls back to the uniform sphere.
inline VectorXd vmf_perturb(const VectorXd& x, double kappa, double magnitude,
                            SeedStream& stream, const VectorXd& mean = VectorXd()) {
  if (magnitude == 0.0) return x;
  const int dim = static_cast<int>(x.size());
  VectorXd dir;
  if (kappa <= 0.0 || mean.size() != dim || mean.norm() < 1e-12) {
    dir = dim == 1 ? VectorXd::Constant(1, stream.uniform() < 0.5 ? -1.0 : 1.0)
                   : uniform_sphere(dim, stream);
  } else {
    dir = vmf_direction(mean, kappa, stream);
  }
  VectorXd out = x + magnitude * dir;
  for (int i = 0; i < dim; ++i) out[i] = std::min(std::max(out[i], 0.0), 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Plain (tape-free) policy step, for tests and lightweight forward passes.

inline std::pair<VectorXd, VectorXd> policy_step(const PolicyParams& p,
                                                 const VectorXd& hidden,
                                                 const VectorXd& x_prev,
                                                 double y_prev) {
  const auto elu = [](double v) { return v > 0.0 ? v : std::expm1(v); };
  const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  VectorXd xin;
  if (p.shape.head == PolicyHead::discrete) {
    const int C = p.shape.categories;
    VectorXd pooled = VectorXd::Zero(C);
    for (int i = 0; i < p.shape.dim; ++i) pooled += x_prev.segment(i * C, C);
    xin = p.Wemb * pooled + p.bemb.col(0);
  } else {
    xin = x_prev;
  }
  VectorXd enc(xin.size() + 1);
  enc << xin, y_prev;
  const VectorXd e1 = (p.We1 * enc + p.be1.col(0)).unaryExpr(elu);
  const VectorXd e2 = (p.We2 * e1 + p.be2.col(0)).unaryExpr(elu);
  const VectorXd z = (p.Wz * e2 + p.Uz * hidden + p.bz.col(0)).unaryExpr(sig);
  const VectorXd r = (p.Wr * e2 + p.Ur * hidden + p.br.col(0)).unaryExpr(sig);
  const VectorXd n =
      (p.Wn * e2 + r.cwiseProduct(p.Un * hidden) + p.bn.col(0)).array().tanh();
  const VectorXd h = n + z.cwiseProduct(hidden - n);
  const VectorXd d1 = (p.Wd1 * h + p.bd1.col(0)).unaryExpr(elu);
  const VectorXd d2 = (p.Wd2 * d1 + p.bd2.col(0)).unaryExpr(elu);
  const VectorXd logits = p.Wd3 * d2 + p.bd3.col(0);
  VectorXd x_next;
  if (p.shape.head == PolicyHead::discrete) {
    const int C = p.shape.categories;
    x_next = VectorXd::Zero(logits.size());
    for (int i = 0; i < p.shape.dim; ++i) {
      Eigen::Index arg;
      logits.segment(i * C, C).maxCoeff(&arg);
      x_next[i * C + arg] = 1.0;
    }
  } else {
    x_next = logits.unaryExpr(sig);
  }
  return {x_next, h};
}

// ---------------------------------------------------------------------------
// Rollout graph.

struct RolloutOptions {
  double lambda = 1.0;
  double value_weight = 1.0;  // 0 isolates the cost term (gradient tests)
  bool perturb = false;       // insert vMF offset nodes on emitted queries
  bool free_actions = false;  // action head replaced by free per-path variables
};

struct RolloutGraph {
  tape::Graph g;
  PolicyShape shape;
  int L = 0;
  int B = 0;  // batch = n_paths
  const PathBatch* batch = nullptr;
  RolloutOptions opts;

  std::vector<tape::Value*> param_nodes;   // policy params, flatten order
  std::vector<tape::Value*> extra_nodes;   // free-action / MSL variables
  std::vector<tape::AddConst*> vmf_nodes;  // per emitted step when perturb
  tape::Node* first_step_raw = nullptr;    // unperturbed first emission
  std::vector<tape::Node*> query_nodes;    // L coordinate nodes (dim x B)
  std::vector<tape::Node*> query_onehot;   // discrete: one-hot query nodes
  std::vector<tape::PathEval*> y_nodes;    // L fantasized observations
  tape::Node* action_coord = nullptr;      // dim x B
  tape::Node* action_onehot = nullptr;     // discrete only
  tape::PathEval* action_value = nullptr;
  tape::TrajCost* cost_node = nullptr;
  tape::Objective* objective = nullptr;

  Eigen::Index trainable_size() const {
    Eigen::Index n = 0;
    for (auto* p : param_nodes) n += p->val.size();
    for (auto* p : extra_nodes) n += p->val.size();
    return n;
  }

  // Copy a flat trainable vector into the graph (policy params first, then
  // any free variables).
  void write_trainable(const VectorXd& flat) {
    Eigen::Index at = 0;
    for (auto* node : param_nodes) {
      Eigen::Map<MatrixXd>(node->val.data(), node->val.rows(), node->val.cols()) =
          Eigen::Map<const MatrixXd>(flat.data() + at, node->val.rows(),
                                     node->val.cols());
      at += node->val.size();
    }
    for (auto* node : extra_nodes) {
      Eigen::Map<MatrixXd>(node->val.data(), node->val.rows(), node->val.cols()) =
          Eigen::Map<const MatrixXd>(flat.data() + at, node->val.rows(),
                                     node->val.cols());
      at += node->val.size();
    }
  }

  void read_trainable_grad(VectorXd& out) const {
    out.resize(trainable_size());
    Eigen::Index at = 0;
    for (auto* node : param_nodes) {
      out.segment(at, node->grad.size()) =
          Eigen::Map<const VectorXd>(node->grad.data(), node->grad.size());
      at += node->grad.size();
    }
    for (auto* node : extra_nodes) {
      out.segment(at, node->grad.size()) =
          Eigen::Map<const VectorXd>(node->grad.data(), node->grad.size());
      at += node->grad.size();
    }
  }
};

namespace policy_detail {

struct ParamNodes {
  tape::Value *Wemb = nullptr, *bemb = nullptr;
  tape::Value *We1, *be1, *We2, *be2;
  tape::Value *Wz, *Uz, *bz, *Wr, *Ur, *br, *Wn, *Un, *bn;
  tape::Value *Wd1, *bd1, *Wd2, *bd2, *Wd3, *bd3;
};

inline ParamNodes add_param_nodes(RolloutGraph& rg) {
  const PolicyShape& s = rg.shape;
  const int h = s.hidden;
  ParamNodes P;
  auto val = [&](int rows, int cols) { return rg.g.add<tape::Value>(rows, cols); };
  if (s.head == PolicyHead::discrete) {
    P.Wemb = val(s.categories, s.categories);
    P.bemb = val(s.categories, 1);
    rg.param_nodes.push_back(P.Wemb);
    rg.param_nodes.push_back(P.bemb);
  }
  P.We1 = val(h, s.encoder_in());
  P.be1 = val(h, 1);
  P.We2 = val(h, h);
  P.be2 = val(h, 1);
  P.Wz = val(h, h);
  P.Uz = val(h, h);
  P.bz = val(h, 1);
  P.Wr = val(h, h);
  P.Ur = val(h, h);
  P.br = val(h, 1);
  P.Wn = val(h, h);
  P.Un = val(h, h);
  P.bn = val(h, 1);
  P.Wd1 = val(h, h);
  P.bd1 = val(h, 1);
  P.Wd2 = val(h, h);
  P.bd2 = val(h, 1);
  P.Wd3 = val(s.decoder_out(), h);
  P.bd3 = val(s.decoder_out(), 1);
  for (tape::Value* v : {P.We1, P.be1, P.We2, P.be2, P.Wz, P.Uz, P.bz, P.Wr,
                         P.Ur, P.br, P.Wn, P.Un, P.bn, P.Wd1, P.bd1, P.Wd2,
                         P.bd2, P.Wd3, P.bd3})
    rg.param_nodes.push_back(v);
  return P;
}

// Encoder input from a raw query node (coordinates or one-hots) and a scalar
// observation row.
inline tape::Node* encoder_input(RolloutGraph& rg, const ParamNodes& P,
                                 tape::Node* x, tape::Node* y) {
  if (rg.shape.head == PolicyHead::discrete) {
    auto* pooled = rg.g.add<tape::SumBlocks>(x, rg.shape.dim, rg.shape.categories);
    auto* emb = rg.g.add<tape::Affine>(P.Wemb, P.bemb, pooled);
    return rg.g.add<tape::ConcatRows>(emb, y);
  }
  return rg.g.add<tape::ConcatRows>(x, y);
}

// One GRU cell; returns the next hidden node.
inline tape::Node* gru_cell(RolloutGraph& rg, const ParamNodes& P,
                            tape::Node* enc_in, tape::Node* h) {
  auto& g = rg.g;
  auto* e1 = g.add<tape::Elu>(g.add<tape::Affine>(P.We1, P.be1, enc_in));
  auto* e2 = g.add<tape::Elu>(g.add<tape::Affine>(P.We2, P.be2, e1));
  auto* z = g.add<tape::Sigmoid>(
      g.add<tape::Add>(g.add<tape::Affine>(P.Wz, P.bz, e2), g.add<tape::Linear>(P.Uz, h)));
  auto* r = g.add<tape::Sigmoid>(
      g.add<tape::Add>(g.add<tape::Affine>(P.Wr, P.br, e2), g.add<tape::Linear>(P.Ur, h)));
  auto* n = g.add<tape::Tanh>(g.add<tape::Add>(
      g.add<tape::Affine>(P.Wn, P.bn, e2),
      g.add<tape::Hadamard>(r, g.add<tape::Linear>(P.Un, h))));
  // h' = n + z .* (h - n)
  return g.add<tape::Add>(n, g.add<tape::Hadamard>(z, g.add<tape::Sub>(h, n)));
}

// Decoder: returns the raw emission (sigmoid coords, or straight-through
// one-hots for the discrete head).
inline tape::Node* decode(RolloutGraph& rg, const ParamNodes& P, tape::Node* h) {
  auto& g = rg.g;
  auto* d1 = g.add<tape::Elu>(g.add<tape::Affine>(P.Wd1, P.bd1, h));
  auto* d2 = g.add<tape::Elu>(g.add<tape::Affine>(P.Wd2, P.bd2, d1));
  auto* logits = g.add<tape::Affine>(P.Wd3, P.bd3, d2);
  if (rg.shape.head == PolicyHead::discrete)
    return g.add<tape::StraightThrough>(logits, rg.shape.dim, rg.shape.categories);
  return g.add<tape::Sigmoid>(logits);
}

// Fixed map from stacked one-hots to cell-center coordinates.
inline MatrixXd cell_center_map(int dim, int C) {
  MatrixXd A = MatrixXd::Zero(dim, static_cast<Eigen::Index>(dim) * C);
  for (int i = 0; i < dim; ++i)
    for (int c = 0; c < C; ++c) A(i, i * C + c) = (c + 0.5) / C;
  return A;
}

// One-hot representation of a committed query (discrete head warm inputs).
inline VectorXd to_query_rows(const PolicyShape& s, const VectorXd& point) {
  if (s.head == PolicyHead::continuous) return point;
  const int C = s.categories;
  VectorXd v = VectorXd::Zero(static_cast<Eigen::Index>(s.dim) * C);
  for (int i = 0; i < s.dim; ++i) {
    int c = static_cast<int>(point[i] * C);
    c = std::min(std::max(c, 0), C - 1);
    v[i * C + c] = 1.0;
  }
  return v;
}

}  // namespace policy_detail

// Build the full rollout tape: warm start over the observed history
// (x_1..x_{t-1} fed with outputs discarded), the first emitting step
// consuming (x_t, y_t), L-1 further lookahead steps consuming fantasized
// pairs, and the action step consuming (x_{t+L}, y_{t+L}).  L=0 reduces to
// the action step alone.  `observed_path` is the committed query trajectory
// used for cost accounting (its last point is the cost anchor x_t); the
// Dataset supplies the warm-start pairs.
inline std::shared_ptr<RolloutGraph> build_rollout_graph(
    const PolicyShape& shape, const PathBatch* batch, const Dataset& data,
    int L, const CostModel& cost, const RolloutOptions& opts,
    const std::vector<VectorXd>& observed_path) {
  if (data.size() == 0)
    throw std::invalid_argument("build_rollout_graph: empty dataset");
  if (observed_path.empty())
    throw std::invalid_argument("build_rollout_graph: empty observed path");
  if (L < 0) throw std::invalid_argument("build_rollout_graph: L must be >= 0");
  if (L == 0 && opts.free_actions)
    throw std::invalid_argument(
        "build_rollout_graph: free actions need at least one lookahead step");

  auto rg = std::make_shared<RolloutGraph>();
  rg->shape = shape;
  rg->L = L;
  rg->B = batch->n_paths;
  rg->batch = batch;
  rg->opts = opts;
  auto& g = rg->g;
  const int B = rg->B;
  const int t = static_cast<int>(data.size());

  policy_detail::ParamNodes P = policy_detail::add_param_nodes(*rg);

  std::vector<int> all_paths(B);
  for (int i = 0; i < B; ++i) all_paths[i] = i;

  // Warm phase: pairs (x_1,y_1) .. (x_{t-1},y_{t-1}), batch 1, no decoder.
  auto* h0 = g.add<tape::Value>(shape.hidden, 1);  // zeros
  tape::Node* h = h0;
  for (int i = 0; i + 1 < t; ++i) {
    auto* x_in = g.add<tape::Value>(shape.query_rows(), 1);
    x_in->val.col(0) = policy_detail::to_query_rows(shape, data.points[i]);
    auto* y_in = g.add<tape::Value>(1, 1);
    y_in->val(0, 0) = data.observations[i];
    auto* enc_in = policy_detail::encoder_input(*rg, P, x_in, y_in);
    h = policy_detail::gru_cell(*rg, P, enc_in, h);
  }

  // Input pair (x_t, y_t) for the first emitting step.
  auto* x_t = g.add<tape::Value>(shape.query_rows(), 1);
  x_t->val.col(0) = policy_detail::to_query_rows(shape, data.points.back());
  auto* y_t = g.add<tape::Value>(1, 1);
  y_t->val(0, 0) = data.observations.back();

  // Cost anchor: last committed query in coordinates.
  auto* anchor = g.add<tape::Value>(shape.dim, 1);
  anchor->val.col(0) = observed_path.back();
  const double obs_cum = cumulative_markov(cost, observed_path);

  const MatrixXd centers =
      shape.head == PolicyHead::discrete
          ? policy_detail::cell_center_map(shape.dim, shape.categories)
          : MatrixXd();

  std::vector<tape::Node*> traj_steps;  // coordinate nodes for TrajCost

  tape::Node* prev_x = nullptr;  // query-row node feeding the next step
  tape::PathEval* prev_y = nullptr;

  // Emit one step.  For batch-1 emissions (the first lookahead step, or the
  // L=0 action), broadcast to B and optionally perturb per path.
  auto emit = [&](tape::Node* enc_in, bool is_action) -> tape::Node* {
    h = policy_detail::gru_cell(*rg, P, enc_in, h);
    tape::Node* raw = policy_detail::decode(*rg, P, h);
    if (rg->first_step_raw == nullptr) rg->first_step_raw = raw;  // L=0: action
    (void)is_action;
    tape::Node* out = raw;
    if (out->val.cols() == 1 && B > 1) {
      out = g.add<tape::BroadcastCols>(out, B);
      h = g.add<tape::BroadcastCols>(h, B);
    }
    const bool perturb_this =
        opts.perturb && shape.head == PolicyHead::continuous &&
        (!is_action || L == 0);
    if (perturb_this) {
      auto* off = g.add<tape::AddConst>(out);
      rg->vmf_nodes.push_back(off);
      out = g.add<tape::Clamp01>(off);
    }
    return out;
  };

  // Free-variable emission (MSL-style action head).
  auto emit_free = [&](bool /*is_action*/) -> tape::Node* {
    auto* logits = g.add<tape::Value>(shape.decoder_out(), B);
    rg->extra_nodes.push_back(logits);
    if (shape.head == PolicyHead::discrete)
      return g.add<tape::StraightThrough>(logits, shape.dim, shape.categories);
    return g.add<tape::Sigmoid>(logits);
  };

  // Lookahead steps.
  for (int l = 1; l <= L; ++l) {
    tape::Node* enc_in;
    if (l == 1) {
      enc_in = policy_detail::encoder_input(*rg, P, x_t, y_t);
    } else {
      enc_in = policy_detail::encoder_input(*rg, P, prev_x, prev_y);
    }
    tape::Node* q = emit(enc_in, /*is_action=*/false);
    tape::Node* coord = q;
    if (shape.head == PolicyHead::discrete) {
      rg->query_onehot.push_back(q);
      coord = g.add<tape::LinMapConst>(centers, q);
    }
    rg->query_nodes.push_back(coord);
    traj_steps.push_back(coord);
    auto* y = g.add<tape::PathEval>(coord, batch, all_paths);
    rg->y_nodes.push_back(y);
    prev_x = q;
    prev_y = y;
  }

  // Action step.
  tape::Node* a;
  if (opts.free_actions) {
    a = emit_free(true);
  } else {
    tape::Node* enc_in =
        L == 0 ? policy_detail::encoder_input(*rg, P, x_t, y_t)
               : policy_detail::encoder_input(*rg, P, prev_x, prev_y);
    a = emit(enc_in, /*is_action=*/true);
  }
  if (a->val.cols() == 1 && B > 1) a = g.add<tape::BroadcastCols>(a, B);
  tape::Node* a_coord = a;
  if (shape.head == PolicyHead::discrete) {
    rg->action_onehot = a;
    a_coord = g.add<tape::LinMapConst>(centers, a);
  }
  rg->action_coord = a_coord;
  traj_steps.push_back(a_coord);

  rg->action_value = g.add<tape::PathEval>(a_coord, batch, all_paths);
  rg->cost_node = g.add<tape::TrajCost>(anchor, traj_steps, cost, obs_cum);
  rg->objective = g.add<tape::Objective>(rg->action_value, rg->cost_node,
                                         opts.lambda, opts.value_weight);
  return rg;
}

// ---------------------------------------------------------------------------
// RolloutResult: materialized tensors plus the tape for the reverse pass.

struct RolloutResult {
  std::vector<MatrixXd> lookahead_x;  // L entries, dim x r
  MatrixXd lookahead_y;               // L x r
  MatrixXd actions;                   // dim x r (cell centers for discrete)
  MatrixXd step_costs;                // (L+1) x r (soft per-step costs)
  double objective = 0.0;
  std::shared_ptr<RolloutGraph> tape;
};

inline RolloutResult package_rollout(std::shared_ptr<RolloutGraph> rg) {
  RolloutResult res;
  res.tape = rg;
  res.lookahead_x.reserve(rg->query_nodes.size());
  for (auto* q : rg->query_nodes) res.lookahead_x.push_back(q->val);
  res.lookahead_y.resize(rg->L, rg->B);
  for (int l = 0; l < rg->L; ++l) res.lookahead_y.row(l) = rg->y_nodes[l]->val;
  res.actions = rg->action_coord->val;
  res.step_costs = rg->cost_node->per_step;
  res.objective = rg->objective->val(0, 0);
  return res;
}

// Deterministic unroll (no perturbation), costs anchored on the full
// committed query path held by the dataset.
inline RolloutResult rollout(const PolicyParams& params, const PathBatch& batch,
                             const Dataset& data, int L, const CostModel& cost,
                             double lambda = 1.0) {
  RolloutOptions opts;
  opts.lambda = lambda;
  auto rg = build_rollout_graph(params.shape, &batch, data, L, cost, opts,
                                data.points);
  rg->write_trainable(params.flatten());
  rg->g.forward();
  return package_rollout(rg);
}

// Exact reverse-mode gradient of result.objective w.r.t. the policy
// parameters (flatten order).
inline VectorXd backward(const RolloutResult& result, const PolicyParams& params) {
  (void)params;
  RolloutGraph& rg = *result.tape;
  rg.g.backward(rg.objective);
  VectorXd grad;
  rg.read_trainable_grad(grad);
  return grad;
}

// Optional warm-up: 50 supervised steps nudging emissions toward scrambled
// Sobol targets before the first BO iteration (low-data regularization).
inline void warmup_policy(PolicyParams& params, SeedStream stream, int steps = 50) {
  if (params.shape.head != PolicyHead::continuous) return;
  const int dim = params.shape.dim;
  RolloutGraph rg;  // reuse the param plumbing on a local graph
  rg.shape = params.shape;
  // Build: 3 constant history pairs -> one emission -> MSE to target.
  auto& gg = rg.g;
  policy_detail::ParamNodes P = policy_detail::add_param_nodes(rg);
  auto* h0 = gg.add<tape::Value>(params.shape.hidden, 1);
  tape::Node* h = h0;
  std::vector<tape::Value*> xs, ys;
  for (int i = 0; i < 3; ++i) {
    auto* x = gg.add<tape::Value>(dim, 1);
    auto* y = gg.add<tape::Value>(1, 1);
    xs.push_back(x);
    ys.push_back(y);
    auto* enc_in = policy_detail::encoder_input(rg, P, x, y);
    h = policy_detail::gru_cell(rg, P, enc_in, h);
  }
  auto* emitted = policy_detail::decode(rg, P, h);
  auto* loss = gg.add<tape::TargetMse>(emitted);

  VectorXd flat = params.flatten();
  AdamState adam = AdamState::make(flat.size(), 1e-3);
  SobolSequence targets(dim, stream.fork(1));
  for (int s = 0; s < steps; ++s) {
    for (int i = 0; i < 3; ++i) {
      for (int d = 0; d < dim; ++d) xs[i]->val(d, 0) = stream.uniform();
      ys[i]->val(0, 0) = stream.normal();
    }
    loss->target.col(0) = targets.next();
    rg.write_trainable(flat);
    gg.forward();
    gg.backward(loss);
    VectorXd grad;
    rg.read_trainable_grad(grad);
    adam_step(flat, grad, adam);
  }
  params.unflatten(flat);
}

}  // namespace lookahes

#endif  // LOOKAHES_POLICY_HPP
