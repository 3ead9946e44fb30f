#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ex2mcmc/core.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"

namespace ex2 {

namespace detail {

/// Elementwise tanh through one vectorized exp; a short odd series near 0 keeps the
/// relative error at the 1e-14 level. Eigen's double tanh is scalar and dominated
/// the cost of batched flow passes.
inline Matrix tanh(const Matrix& x) {
  const auto a = x.array().abs();
  const Eigen::ArrayXXd e = (-2.0 * a).exp();
  const Eigen::ArrayXXd x2 = x.array().square();
  const Eigen::ArrayXXd series = a * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
  return (x.array().sign() * (a < 0.005).select(series, (1.0 - e) / (1.0 + e))).matrix();
}

}  // namespace detail

/// Fully connected tanh network whose parameters live in a shared flat vector.
///
/// Layer l stores W_l (rows = sizes[l+1], cols = sizes[l], column-major) followed by
/// b_l. The last layer is linear. Evaluation is batched: inputs are columns.
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> acts;  // acts[0] is the input, acts[l] the output of layer l-1
  };

  Mlp() = default;
  Mlp(std::vector<int> sizes, Eigen::Index offset) : sizes_(std::move(sizes)), offset_(offset) {
    if (sizes_.size() < 2) throw ArgumentError("Mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw ArgumentError("Mlp: layer sizes must be positive");
  }

  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index offset() const { return offset_; }

  Eigen::Index param_count() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) n += sizes_[l + 1] * (sizes_[l] + 1);
    return n;
  }

  std::size_t n_layers() const { return sizes_.size() - 1; }

  /// Offset of W_l inside the flat parameter vector.
  Eigen::Index weight_offset(std::size_t l) const {
    Eigen::Index off = offset_;
    for (std::size_t k = 0; k < l; ++k) off += sizes_[k + 1] * (sizes_[k] + 1);
    return off;
  }
  Eigen::Index bias_offset(std::size_t l) const {
    return weight_offset(l) + sizes_[l + 1] * sizes_[l];
  }

  Matrix forward(const double* theta, const Matrix& input, Tape* tape) const {
    Matrix h = input;
    if (tape) {
      tape->acts.clear();
      tape->acts.push_back(h);
    }
    for (std::size_t l = 0; l < n_layers(); ++l) {
      Eigen::Map<const Matrix> w(theta + weight_offset(l), sizes_[l + 1], sizes_[l]);
      Eigen::Map<const Vector> b(theta + bias_offset(l), sizes_[l + 1]);
      Matrix pre = w * h;
      pre.colwise() += b;
      if (l + 1 < n_layers()) {
        h = detail::tanh(pre);
      } else {
        h = std::move(pre);
      }
      if (tape) tape->acts.push_back(h);
    }
    return h;
  }

  /// Accumulates parameter gradients into `grad` and returns the input adjoint.
  Matrix backward(const double* theta, const Tape& tape, Matrix out_adj, double* grad) const {
    Matrix adj = std::move(out_adj);
    for (std::size_t l = n_layers(); l-- > 0;) {
      if (l + 1 < n_layers()) {
        adj.array() *= 1.0 - tape.acts[l + 1].array().square();
      }
      const Matrix& in = tape.acts[l];
      Eigen::Map<Matrix> gw(grad + weight_offset(l), sizes_[l + 1], sizes_[l]);
      Eigen::Map<Vector> gb(grad + bias_offset(l), sizes_[l + 1]);
      gw.noalias() += adj * in.transpose();
      gb += adj.rowwise().sum();
      Eigen::Map<const Matrix> w(theta + weight_offset(l), sizes_[l + 1], sizes_[l]);
      adj = w.transpose() * adj;
    }
    return adj;
  }

 private:
  std::vector<int> sizes_;
  Eigen::Index offset_ = 0;
};

/// Affine coupling: coordinates in `cond` pass through, coordinates in `trans` map to
/// x * exp(s(x_cond)) + t(x_cond), with s squashed to (-clamp, clamp).
struct CouplingLayer {
  std::vector<Eigen::Index> cond;
  std::vector<Eigen::Index> trans;
  Mlp s_net;
  Mlp t_net;
};

struct FlowConfig {
  int dim = 2;
  int n_layers = 4;
  std::vector<int> hidden = {32, 32};
  double scale_clamp = 5.0;
};

/// RealNVP flow T_theta on R^d with a standard-normal base density phi.
///
/// Masks alternate between even and odd coordinates (layer 0 conditions on the even
/// ones). The final layer of every s/t network starts at zero, so a freshly built flow
/// is the identity map.
class RealNvpFlow {
 public:
  RealNvpFlow(FlowConfig cfg, Rng& rng) : RealNvpFlow(std::move(cfg)) {
    for (const auto& layer : layers_) {
      for (const Mlp* net : {&layer.s_net, &layer.t_net}) {
        for (std::size_t l = 0; l + 1 < net->n_layers(); ++l) {
          const double bound = 1.0 / std::sqrt(static_cast<double>(net->sizes()[l]));
          const Eigen::Index begin = net->weight_offset(l);
          const Eigen::Index end = net->weight_offset(l + 1);
          for (Eigen::Index k = begin; k < end; ++k) params_[k] = bound * (2.0 * rng.uniform() - 1.0);
        }
      }
    }
  }

  /// Identity-initialized flow with all hidden weights zero.
  explicit RealNvpFlow(FlowConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.dim < 2) throw ArgumentError("RealNvpFlow: dim must be >= 2");
    if (cfg_.n_layers < 1) throw ArgumentError("RealNvpFlow: need at least one coupling layer");
    if (!(cfg_.scale_clamp > 0.0)) throw ArgumentError("RealNvpFlow: scale_clamp must be > 0");
    Eigen::Index offset = 0;
    for (int l = 0; l < cfg_.n_layers; ++l) {
      CouplingLayer layer;
      for (Eigen::Index i = 0; i < cfg_.dim; ++i) {
        ((i % 2) == (l % 2) ? layer.cond : layer.trans).push_back(i);
      }
      std::vector<int> sizes;
      sizes.push_back(static_cast<int>(layer.cond.size()));
      sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
      sizes.push_back(static_cast<int>(layer.trans.size()));
      layer.s_net = Mlp(sizes, offset);
      offset += layer.s_net.param_count();
      layer.t_net = Mlp(sizes, offset);
      offset += layer.t_net.param_count();
      layers_.push_back(std::move(layer));
    }
    params_ = Vector::Zero(offset);
  }

  const FlowConfig& config() const { return cfg_; }
  Eigen::Index dim() const { return cfg_.dim; }
  Eigen::Index n_params() const { return params_.size(); }
  const std::vector<CouplingLayer>& layers() const { return layers_; }
  const Vector& params() const { return params_; }

  void set_params(const Vector& theta) {
    require_dim(theta.size(), params_.size(), "RealNvpFlow::set_params");
    if (!theta.allFinite()) throw NumericalError("RealNvpFlow: non-finite parameters");
    params_ = theta;
  }

  // -- batched maps; columns are points ------------------------------------------

  /// x = T(z) and log|det dT/dz| per column.
  std::pair<Matrix, Vector> forward(const Matrix& z) const { return forward_impl(z, nullptr); }

  /// z = T^{-1}(x) and log|det dT^{-1}/dx| per column.
  std::pair<Matrix, Vector> inverse(const Matrix& x) const { return inverse_impl(x, nullptr); }

  std::pair<Vector, double> forward(const Vector& z) const {
    require_dim(z.size(), dim(), "RealNvpFlow::forward");
    auto [x, ld] = forward_impl(Matrix(z), nullptr);
    return {x.col(0), ld[0]};
  }

  std::pair<Vector, double> inverse(const Vector& x) const {
    require_dim(x.size(), dim(), "RealNvpFlow::inverse");
    auto [z, ld] = inverse_impl(Matrix(x), nullptr);
    return {z.col(0), ld[0]};
  }

  static Vector base_log_density(const Matrix& z) {
    return (-0.5 * z.colwise().squaredNorm().array() - 0.5 * kLog2Pi * static_cast<double>(z.rows()))
        .matrix()
        .transpose();
  }

  /// log lambda_theta(x) per column: log phi(T^{-1}(x)) + log|det J_{T^{-1}}(x)|.
  Vector log_density(const Matrix& x) const {
    auto [z, ld] = inverse_impl(x, nullptr);
    return base_log_density(z) + ld;
  }

  double log_density(const Vector& x) const {
    require_dim(x.size(), dim(), "RealNvpFlow::log_density");
    return log_density(Matrix(x))[0];
  }

  // -- parameter gradients -------------------------------------------------------

  /// sum_j w_j grad_theta log lambda_theta(x_j) over the columns of x.
  Vector grad_log_density_params(const Matrix& x, const Vector& weights) const {
    require_dim(x.rows(), dim(), "grad_log_density_params");
    require_dim(weights.size(), x.cols(), "grad_log_density_params weights");
    Tape tape;
    auto [z, ld] = inverse_impl(x, &tape);
    (void)ld;
    Vector grad = Vector::Zero(n_params());
    // Objective sum_j w_j [log phi(z_j) + ld_j]; adjoint of z is -w_j z_j.
    Matrix adj = -(z.array().rowwise() * weights.transpose().array()).matrix();
    const double c = cfg_.scale_clamp;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const CouplingLayer& layer = layers_[l];
      const LayerTape& lt = tape.layers[l];
      // Inverse layer: v_trans = (u_trans - t) * exp(-s), ld -= sum s.
      const Matrix v_adj_trans = gather(adj, layer.trans);
      const Matrix e_neg = (-lt.s.array()).exp().matrix();
      Matrix u_adj_trans = (v_adj_trans.array() * e_neg.array()).matrix();
      Matrix t_adj = -u_adj_trans;
      Matrix s_adj = (-(v_adj_trans.array() * lt.trans_out.array())).matrix();
      s_adj.array().rowwise() -= weights.transpose().array();
      Matrix r_adj = (s_adj.array() * (1.0 - (lt.s.array() / c).square())).matrix();
      Matrix cond_adj = layer.s_net.backward(params_.data(), lt.s_tape, std::move(r_adj), grad.data());
      cond_adj += layer.t_net.backward(params_.data(), lt.t_tape, std::move(t_adj), grad.data());
      scatter(adj, layer.trans, u_adj_trans);
      scatter_add(adj, layer.cond, cond_adj);
    }
    return grad;
  }

  Vector grad_log_density_params(const Vector& x) const {
    require_dim(x.size(), dim(), "param_grad_log_density");
    return grad_log_density_params(Matrix(x), Vector::Ones(1));
  }

  /// sum_j w_j grad_theta [log pi~(T(z_j)) + log|det J_T(z_j)|] over the columns of z.
  Vector grad_backward_terms(const Target& target, const Matrix& z, const Vector& weights) const {
    require_dim(z.rows(), dim(), "grad_backward_terms");
    require_dim(target.dim(), dim(), "grad_backward_terms target");
    require_dim(weights.size(), z.cols(), "grad_backward_terms weights");
    Tape tape;
    auto [x, ld] = forward_impl(z, &tape);
    (void)ld;
    Vector grad = Vector::Zero(n_params());
    Matrix adj(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      adj.col(j) = weights[j] * target.grad_log_density(x.col(j));
    if (!adj.allFinite()) throw NumericalError("grad_backward_terms: non-finite target gradient");
    const double c = cfg_.scale_clamp;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const CouplingLayer& layer = layers_[l];
      const LayerTape& lt = tape.layers[l];
      // Forward layer: v_trans = u_trans * exp(s) + t, ld += sum s.
      const Matrix v_adj_trans = gather(adj, layer.trans);
      const Matrix e_pos = lt.s.array().exp().matrix();
      Matrix u_adj_trans = (v_adj_trans.array() * e_pos.array()).matrix();
      Matrix t_adj = v_adj_trans;
      Matrix s_adj = (v_adj_trans.array() * (lt.trans_out.array() - lt.t.array())).matrix();
      s_adj.array().rowwise() += weights.transpose().array();
      Matrix r_adj = (s_adj.array() * (1.0 - (lt.s.array() / c).square())).matrix();
      Matrix cond_adj = layer.s_net.backward(params_.data(), lt.s_tape, std::move(r_adj), grad.data());
      cond_adj += layer.t_net.backward(params_.data(), lt.t_tape, std::move(t_adj), grad.data());
      scatter(adj, layer.trans, u_adj_trans);
      scatter_add(adj, layer.cond, cond_adj);
    }
    return grad;
  }

  Vector grad_backward_terms(const Target& target, const Vector& z) const {
    require_dim(z.size(), dim(), "param_grad_backward_terms");
    return grad_backward_terms(target, Matrix(z), Vector::Ones(1));
  }

  // -- checkpoints ----------------------------------------------------------------

  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  static RealNvpFlow load(std::istream& is);
  static RealNvpFlow load(const std::string& path);

 private:
  struct LayerTape {
    Mlp::Tape s_tape;
    Mlp::Tape t_tape;
    Matrix s;
    Matrix t;
    Matrix trans_out;  // transformed block produced by this layer (in pass direction)
  };
  struct Tape {
    std::vector<LayerTape> layers;  // indexed by layer, whatever the pass direction
  };

  static Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
  }
  static void scatter(Matrix& m, const std::vector<Eigen::Index>& rows, const Matrix& block) {
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(rows[i]) = block.row(static_cast<Eigen::Index>(i));
  }
  static void scatter_add(Matrix& m, const std::vector<Eigen::Index>& rows, const Matrix& block) {
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(rows[i]) += block.row(static_cast<Eigen::Index>(i));
  }

  void scale_and_shift(const CouplingLayer& layer, const Matrix& cond, Matrix& s, Matrix& t,
                       LayerTape* lt) const {
    const double c = cfg_.scale_clamp;
    s = layer.s_net.forward(params_.data(), cond, lt ? &lt->s_tape : nullptr);
    s = c * detail::tanh(s / c);
    t = layer.t_net.forward(params_.data(), cond, lt ? &lt->t_tape : nullptr);
  }

  std::pair<Matrix, Vector> forward_impl(const Matrix& z, Tape* tape) const {
    require_dim(z.rows(), dim(), "RealNvpFlow::forward");
    Matrix x = z;
    Vector ld = Vector::Zero(z.cols());
    if (tape) tape->layers.assign(layers_.size(), LayerTape{});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const CouplingLayer& layer = layers_[l];
      LayerTape* lt = tape ? &tape->layers[l] : nullptr;
      Matrix s, t;
      scale_and_shift(layer, gather(x, layer.cond), s, t, lt);
      Matrix out = (gather(x, layer.trans).array() * s.array().exp() + t.array()).matrix();
      ld += s.colwise().sum().transpose();
      scatter(x, layer.trans, out);
      if (lt) {
        lt->s = std::move(s);
        lt->t = std::move(t);
        lt->trans_out = std::move(out);
      }
    }
    if (!x.allFinite() || !ld.allFinite()) throw NumericalError("RealNvpFlow::forward: non-finite output");
    return {std::move(x), std::move(ld)};
  }

  std::pair<Matrix, Vector> inverse_impl(const Matrix& x, Tape* tape) const {
    require_dim(x.rows(), dim(), "RealNvpFlow::inverse");
    Matrix z = x;
    Vector ld = Vector::Zero(x.cols());
    if (tape) tape->layers.assign(layers_.size(), LayerTape{});
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const CouplingLayer& layer = layers_[l];
      LayerTape* lt = tape ? &tape->layers[l] : nullptr;
      Matrix s, t;
      scale_and_shift(layer, gather(z, layer.cond), s, t, lt);
      Matrix out = ((gather(z, layer.trans) - t).array() * (-s.array()).exp()).matrix();
      ld -= s.colwise().sum().transpose();
      scatter(z, layer.trans, out);
      if (lt) {
        lt->s = std::move(s);
        lt->t = std::move(t);
        lt->trans_out = std::move(out);
      }
    }
    if (!z.allFinite() || !ld.allFinite()) throw NumericalError("RealNvpFlow::inverse: non-finite output");
    return {std::move(z), std::move(ld)};
  }

  FlowConfig cfg_;
  std::vector<CouplingLayer> layers_;
  Vector params_;
};

// -- checkpoint format ------------------------------------------------------------
//
// All integers are unsigned little-endian, reals are IEEE-754 binary64 little-endian.
//
//   offset  size        field
//   0       8           magic "EX2FLOW1"
//   8       4           format version (1)
//   12      4           dim
//   16      4           n_layers
//   20      4           n_hidden (number of hidden layers per s/t network)
//   24      4*n_hidden  hidden layer widths
//   ..      4           mask pattern (0 = alternate, layer 0 conditions on even coords)
//   ..      8           scale_clamp
//   ..      8           q = number of parameters
//   ..      8*q         parameter vector theta in layout order

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(os, bits);
}
inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("flow checkpoint: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("flow checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline void RealNvpFlow::save(std::ostream& os) const {
  os.write("EX2FLOW1", 8);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(cfg_.dim));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg_.n_layers));
  detail::put_u32(os, static_cast<std::uint32_t>(cfg_.hidden.size()));
  for (int h : cfg_.hidden) detail::put_u32(os, static_cast<std::uint32_t>(h));
  detail::put_u32(os, 0);
  detail::put_f64(os, cfg_.scale_clamp);
  detail::put_u64(os, static_cast<std::uint64_t>(params_.size()));
  for (Eigen::Index i = 0; i < params_.size(); ++i) detail::put_f64(os, params_[i]);
  if (!os) throw std::runtime_error("flow checkpoint: write failed");
}

inline void RealNvpFlow::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("flow checkpoint: cannot open " + path);
  save(os);
}

inline RealNvpFlow RealNvpFlow::load(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, "EX2FLOW1", 8) != 0)
    throw std::runtime_error("flow checkpoint: bad magic");
  if (detail::get_u32(is) != 1) throw std::runtime_error("flow checkpoint: unsupported version");
  FlowConfig cfg;
  cfg.dim = static_cast<int>(detail::get_u32(is));
  cfg.n_layers = static_cast<int>(detail::get_u32(is));
  const std::uint32_t n_hidden = detail::get_u32(is);
  if (n_hidden > 64) throw std::runtime_error("flow checkpoint: implausible hidden layer count");
  cfg.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(static_cast<int>(detail::get_u32(is)));
  if (detail::get_u32(is) != 0) throw std::runtime_error("flow checkpoint: unknown mask pattern");
  cfg.scale_clamp = detail::get_f64(is);
  RealNvpFlow flow(cfg);
  const std::uint64_t q = detail::get_u64(is);
  if (q != static_cast<std::uint64_t>(flow.n_params()))
    throw std::runtime_error("flow checkpoint: parameter count does not match header");
  Vector theta(flow.n_params());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = detail::get_f64(is);
  flow.set_params(theta);
  return flow;
}

inline RealNvpFlow RealNvpFlow::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("flow checkpoint: cannot open " + path);
  try {
    return load(is);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path + ")");
  }
}

// -- Adam ---------------------------------------------------------------------------

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  AdamState() = default;
  explicit AdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

/// One Adam step with decoupled weight decay:
///   theta <- theta (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
inline void adam_update(Vector& theta, const Vector& grad, AdamState& state, double lr) {
  require_dim(grad.size(), theta.size(), "adam_update");
  if (state.m.size() == 0) {
    state.m = Vector::Zero(theta.size());
    state.v = Vector::Zero(theta.size());
    state.step = 0;
  }
  require_dim(state.m.size(), theta.size(), "adam_update state");
  if (!grad.allFinite()) throw NumericalError("adam_update: non-finite gradient");
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  theta *= 1.0 - lr * state.weight_decay;
  theta.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace ex2
