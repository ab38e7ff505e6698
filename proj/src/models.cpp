#include "dgtd/models.hpp"

#include <cmath>
#include <stdexcept>

#include "dgtd/rng.hpp"

namespace dgtd {

Vector one_hot(int index, int n) {
  if (index < 0 || index >= n)
    throw std::invalid_argument("one_hot: index out of range");
  Vector v = Vector::Zero(n);
  v[index] = 1.0;
  return v;
}

Vector pmf_from_cdf(const VectorRef& cdf) {
  Vector p(cdf.size());
  Real prev = 0;
  for (int j = 0; j < cdf.size(); ++j) {
    p[j] = cdf[j] - prev;
    prev = cdf[j];
  }
  return p;
}

Real mean_from_cdf(const SupportGrid& grid, const VectorRef& cdf) {
  if (cdf.size() != grid.size())
    throw std::invalid_argument("mean_from_cdf: length mismatch");
  Real mean = 0, prev = 0;
  for (int j = 0; j < cdf.size(); ++j) {
    mean += grid.atom(j) * (cdf[j] - prev);
    prev = cdf[j];
  }
  return mean;
}

LinearCdfModel::LinearCdfModel(Matrix features, int num_inputs, int m)
    : features_(std::move(features)), num_inputs_(num_inputs), m_(m) {
  if (num_inputs < 1 || m < 2)
    throw std::invalid_argument("LinearCdfModel: degenerate table");
  if (features_.rows() != static_cast<long>(num_inputs) * m)
    throw std::invalid_argument("LinearCdfModel: feature rows != inputs * m");
  if (features_.cols() < 1)
    throw std::invalid_argument("LinearCdfModel: empty parameter space");
}

LinearCdfModel LinearCdfModel::one_hot_features(int num_inputs, int m) {
  const long d = static_cast<long>(num_inputs) * m;
  return LinearCdfModel(Matrix::Identity(d, d), num_inputs, m);
}

LinearCdfModel LinearCdfModel::random_features(int num_inputs, int m, int dim,
                                               std::uint64_t seed) {
  SplitMix64 g(mix_key(seed, 0x11f));
  Matrix f(static_cast<long>(num_inputs) * m, dim);
  for (long i = 0; i < f.rows(); ++i)
    for (int j = 0; j < dim; ++j) f(i, j) = uniform_real(g, -1.0, 1.0);
  return LinearCdfModel(std::move(f), num_inputs, m);
}

Vector LinearCdfModel::init_theta(std::uint64_t seed) const {
  SplitMix64 g(mix_key(seed, 0x209));
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(param_dim()));
  Vector theta(param_dim());
  for (int i = 0; i < theta.size(); ++i)
    theta[i] = uniform_real(g, -bound, bound);
  return theta;
}

Eigen::Block<const Matrix> LinearCdfModel::feature_block(int input) const {
  if (input < 0 || input >= num_inputs_)
    throw std::invalid_argument("LinearCdfModel: input id out of range");
  return features_.block(static_cast<long>(input) * m_, 0, m_,
                         features_.cols());
}

Vector LinearCdfModel::grad_cdf(const VectorRef& theta, int input,
                                int j) const {
  (void)theta;
  if (j < 0 || j >= m_)
    throw std::invalid_argument("LinearCdfModel: atom index out of range");
  return feature_block(input).row(j).transpose();
}

Vector LinearCdfModel::hvp(const VectorRef& theta, int input, int j,
                           const VectorRef& w) const {
  (void)theta;
  (void)input;
  (void)j;
  (void)w;
  return Vector::Zero(param_dim());
}

Vector LinearCdfModel::hvp_weighted(const VectorRef& theta, int input,
                                    const VectorRef& coeffs,
                                    const VectorRef& w) const {
  (void)theta;
  (void)input;
  (void)coeffs;
  (void)w;
  return Vector::Zero(param_dim());
}

namespace {

Vector uniform_layer_init(SplitMix64& g, int count, int fan_in) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
  Vector v(count);
  for (int i = 0; i < count; ++i) v[i] = uniform_real(g, -bound, bound);
  return v;
}

}  // namespace

SoftmaxMlpCdfModel::SoftmaxMlpCdfModel(int n_in, int hidden, int m,
                                       Activation activation)
    : n_in_(n_in), hidden_(hidden), m_(m), activation_(activation) {
  if (n_in < 1 || hidden < 1 || m < 2)
    throw std::invalid_argument("SoftmaxMlpCdfModel: degenerate sizes");
  dim_ = hidden * n_in + hidden + m * hidden + m;
}

SoftmaxMlpCdfModel::Views SoftmaxMlpCdfModel::views(
    const VectorRef& theta) const {
  if (theta.size() != dim_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: theta size mismatch");
  const Real* base = theta.data();
  return Views{
      Eigen::Map<const Matrix>(base, hidden_, n_in_),
      Eigen::Map<const Vector>(base + hidden_ * n_in_, hidden_),
      Eigen::Map<const Matrix>(base + hidden_ * n_in_ + hidden_, m_, hidden_),
      Eigen::Map<const Vector>(base + hidden_ * n_in_ + hidden_ + m_ * hidden_,
                               m_)};
}

void SoftmaxMlpCdfModel::act(const Vector& a, Vector& z, Vector& hp,
                             Vector* hpp) const {
  const int h = static_cast<int>(a.size());
  z.resize(h);
  hp.resize(h);
  if (hpp) hpp->resize(h);
  if (activation_ == Activation::tanh_act) {
    for (int i = 0; i < h; ++i) {
      const Real t = std::tanh(a[i]);
      z[i] = t;
      hp[i] = 1.0 - t * t;
      if (hpp) (*hpp)[i] = -2.0 * t * (1.0 - t * t);
    }
  } else {
    for (int i = 0; i < h; ++i) {
      z[i] = a[i] > 0 ? a[i] : 0.0;
      hp[i] = a[i] > 0 ? 1.0 : 0.0;
      if (hpp) (*hpp)[i] = 0.0;
    }
  }
}

Vector SoftmaxMlpCdfModel::init_theta(std::uint64_t seed) const {
  SplitMix64 g(mix_key(seed, 0x31b));
  Vector theta(dim_);
  theta.segment(0, hidden_ * n_in_ + hidden_) =
      uniform_layer_init(g, hidden_ * n_in_ + hidden_, n_in_);
  theta.segment(hidden_ * n_in_ + hidden_, m_ * hidden_ + m_) =
      uniform_layer_init(g, m_ * hidden_ + m_, hidden_);
  return theta;
}

SoftmaxMlpCdfModel::Forward SoftmaxMlpCdfModel::forward(
    const VectorRef& theta, const VectorRef& x) const {
  if (x.size() != n_in_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: input size mismatch");
  const Views v = views(theta);
  Forward f;
  f.a.noalias() = v.w1 * x;
  f.a += v.b1;
  Vector hp;
  act(f.a, f.z, hp, nullptr);
  f.y.noalias() = v.w2 * f.z;
  f.y += v.b2;
  const Real y_max = f.y.maxCoeff();
  Vector e = (f.y.array() - y_max).exp();
  f.p = e / e.sum();
  f.cdf.resize(m_);
  Real acc = 0;
  for (int j = 0; j < m_; ++j) {
    acc += f.p[j];
    f.cdf[j] = acc;
  }
  return f;
}

Vector SoftmaxMlpCdfModel::cdf(const VectorRef& theta,
                               const VectorRef& x) const {
  return forward(theta, x).cdf;
}

Vector SoftmaxMlpCdfModel::pmf(const VectorRef& theta,
                               const VectorRef& x) const {
  return forward(theta, x).p;
}

Matrix SoftmaxMlpCdfModel::cdf_jacobian(const VectorRef& theta,
                                        const VectorRef& x) const {
  const Views v = views(theta);
  const Forward f = forward(theta, x);
  Vector z, hp;
  act(f.a, z, hp, nullptr);

  // Row j of gy is the logit cotangent of F(x, z_j):
  // gy(j, k) = p_k (1[k <= j] - F_j).
  Matrix gy(m_, m_);
  for (int j = 0; j < m_; ++j)
    for (int k = 0; k < m_; ++k)
      gy(j, k) = f.p[k] * ((k <= j ? 1.0 : 0.0) - f.cdf[j]);
  Matrix gz = gy * v.w2;  // m x hidden
  Matrix ga = gz.array().rowwise() * hp.transpose().array();

  Matrix jac(m_, dim_);
  const int off_b1 = hidden_ * n_in_;
  const int off_w2 = off_b1 + hidden_;
  const int off_b2 = off_w2 + m_ * hidden_;
  for (int j = 0; j < m_; ++j) {
    for (int i = 0; i < n_in_; ++i)
      for (int h = 0; h < hidden_; ++h)
        jac(j, i * hidden_ + h) = ga(j, h) * x[i];
    for (int h = 0; h < hidden_; ++h) jac(j, off_b1 + h) = ga(j, h);
    for (int h = 0; h < hidden_; ++h)
      for (int k = 0; k < m_; ++k)
        jac(j, off_w2 + h * m_ + k) = gy(j, k) * f.z[h];
    for (int k = 0; k < m_; ++k) jac(j, off_b2 + k) = gy(j, k);
  }
  return jac;
}

Vector SoftmaxMlpCdfModel::grad_cdf(const VectorRef& theta, const VectorRef& x,
                                    int j) const {
  if (j < 0 || j >= m_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: atom index out of range");
  const Views v = views(theta);
  const Forward f = forward(theta, x);
  Vector z, hp;
  act(f.a, z, hp, nullptr);
  Vector gy(m_);
  for (int k = 0; k < m_; ++k)
    gy[k] = f.p[k] * ((k <= j ? 1.0 : 0.0) - f.cdf[j]);
  Vector gz = v.w2.transpose() * gy;
  Vector ga = hp.cwiseProduct(gz);

  Vector grad(dim_);
  const int off_b1 = hidden_ * n_in_;
  const int off_w2 = off_b1 + hidden_;
  const int off_b2 = off_w2 + m_ * hidden_;
  for (int i = 0; i < n_in_; ++i)
    grad.segment(i * hidden_, hidden_) = ga * x[i];
  grad.segment(off_b1, hidden_) = ga;
  for (int h = 0; h < hidden_; ++h)
    grad.segment(off_w2 + h * m_, m_) = gy * f.z[h];
  grad.segment(off_b2, m_) = gy;
  return grad;
}

Vector SoftmaxMlpCdfModel::hvp_weighted(const VectorRef& theta,
                                        const VectorRef& x,
                                        const VectorRef& coeffs,
                                        const VectorRef& w) const {
  if (coeffs.size() != m_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: coeffs size mismatch");
  if (w.size() != dim_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: direction size mismatch");
  const Views v = views(theta);
  const Views vw = views(w);

  const Forward f = forward(theta, x);
  Vector z, hp, hpp;
  act(f.a, z, hp, &hpp);

  // coeffs weight F rows; fold the inner sum over atoms k <= j into one
  // softmax cotangent c_k = sum_{j >= k} coeffs_j.
  Vector c(m_);
  Real tail = 0;
  for (int k = m_ - 1; k >= 0; --k) {
    tail += coeffs[k];
    c[k] = tail;
  }

  const Real cp = c.dot(f.p);
  Vector gy = f.p.cwiseProduct(c) - f.p * cp;
  Vector gz = v.w2.transpose() * gy;

  // Directional (R) forward sweep along w.
  Vector ra = vw.w1 * x + vw.b1;
  Vector rz = hp.cwiseProduct(ra);
  Vector ry = v.w2 * rz + vw.w2 * f.z + vw.b2;
  const Real p_ry = f.p.dot(ry);
  Vector rp = f.p.cwiseProduct((ry.array() - p_ry).matrix());

  // R backward sweep (the cotangent c is constant).
  const Real c_rp = c.dot(rp);
  Vector rgy = rp.cwiseProduct(c) - rp * cp - f.p * c_rp;
  Vector rgz = v.w2.transpose() * rgy + vw.w2.transpose() * gy;
  Vector rga = hpp.cwiseProduct(ra).cwiseProduct(gz) + hp.cwiseProduct(rgz);

  Vector out(dim_);
  const int off_b1 = hidden_ * n_in_;
  const int off_w2 = off_b1 + hidden_;
  const int off_b2 = off_w2 + m_ * hidden_;
  for (int i = 0; i < n_in_; ++i)
    out.segment(i * hidden_, hidden_) = rga * x[i];
  out.segment(off_b1, hidden_) = rga;
  for (int h = 0; h < hidden_; ++h)
    out.segment(off_w2 + h * m_, m_) = rgy * f.z[h] + gy * rz[h];
  out.segment(off_b2, m_) = rgy;
  return out;
}

Vector SoftmaxMlpCdfModel::hvp(const VectorRef& theta, const VectorRef& x,
                               int j, const VectorRef& w) const {
  if (j < 0 || j >= m_)
    throw std::invalid_argument("SoftmaxMlpCdfModel: atom index out of range");
  Vector coeffs = Vector::Zero(m_);
  coeffs[j] = 1.0;
  return hvp_weighted(theta, x, coeffs, w);
}

QMlpModel::QMlpModel(int n_in, int hidden, Activation activation)
    : n_in_(n_in), hidden_(hidden), activation_(activation) {
  if (n_in < 1 || hidden < 1)
    throw std::invalid_argument("QMlpModel: degenerate sizes");
  dim_ = hidden * n_in + hidden + hidden + 1;
}

Vector QMlpModel::init_theta(std::uint64_t seed) const {
  SplitMix64 g(mix_key(seed, 0x47d));
  Vector theta(dim_);
  theta.segment(0, hidden_ * n_in_ + hidden_) =
      uniform_layer_init(g, hidden_ * n_in_ + hidden_, n_in_);
  theta.segment(hidden_ * n_in_ + hidden_, hidden_ + 1) =
      uniform_layer_init(g, hidden_ + 1, hidden_);
  return theta;
}

namespace {

struct QViews {
  Eigen::Map<const Matrix> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Vector> w2;
  Real b2;
};

QViews q_views(const VectorRef& theta, int hidden, int n_in) {
  const Real* base = theta.data();
  return QViews{Eigen::Map<const Matrix>(base, hidden, n_in),
                Eigen::Map<const Vector>(base + hidden * n_in, hidden),
                Eigen::Map<const Vector>(base + hidden * n_in + hidden,
                                         hidden),
                theta[hidden * n_in + 2 * hidden]};
}

void q_act(Activation activation, const Vector& a, Vector& z, Vector& hp,
           Vector* hpp) {
  const int h = static_cast<int>(a.size());
  z.resize(h);
  hp.resize(h);
  if (hpp) hpp->resize(h);
  if (activation == Activation::tanh_act) {
    for (int i = 0; i < h; ++i) {
      const Real t = std::tanh(a[i]);
      z[i] = t;
      hp[i] = 1.0 - t * t;
      if (hpp) (*hpp)[i] = -2.0 * t * (1.0 - t * t);
    }
  } else {
    for (int i = 0; i < h; ++i) {
      z[i] = a[i] > 0 ? a[i] : 0.0;
      hp[i] = a[i] > 0 ? 1.0 : 0.0;
      if (hpp) (*hpp)[i] = 0.0;
    }
  }
}

}  // namespace

Real QMlpModel::value(const VectorRef& theta, const VectorRef& x) const {
  if (theta.size() != dim_ || x.size() != n_in_)
    throw std::invalid_argument("QMlpModel: size mismatch");
  const QViews v = q_views(theta, hidden_, n_in_);
  Vector a = v.w1 * x + v.b1;
  Vector z, hp;
  q_act(activation_, a, z, hp, nullptr);
  return v.w2.dot(z) + v.b2;
}

Vector QMlpModel::grad(const VectorRef& theta, const VectorRef& x) const {
  if (theta.size() != dim_ || x.size() != n_in_)
    throw std::invalid_argument("QMlpModel: size mismatch");
  const QViews v = q_views(theta, hidden_, n_in_);
  Vector a = v.w1 * x + v.b1;
  Vector z, hp;
  q_act(activation_, a, z, hp, nullptr);
  Vector ga = hp.cwiseProduct(v.w2);

  Vector g(dim_);
  for (int i = 0; i < n_in_; ++i) g.segment(i * hidden_, hidden_) = ga * x[i];
  g.segment(hidden_ * n_in_, hidden_) = ga;
  g.segment(hidden_ * n_in_ + hidden_, hidden_) = z;
  g[dim_ - 1] = 1.0;
  return g;
}

Vector QMlpModel::hvp(const VectorRef& theta, const VectorRef& x,
                      const VectorRef& w) const {
  if (theta.size() != dim_ || w.size() != dim_ || x.size() != n_in_)
    throw std::invalid_argument("QMlpModel: size mismatch");
  const QViews v = q_views(theta, hidden_, n_in_);
  const QViews vw = q_views(w, hidden_, n_in_);
  Vector a = v.w1 * x + v.b1;
  Vector z, hp, hpp;
  q_act(activation_, a, z, hp, &hpp);

  Vector ra = vw.w1 * x + vw.b1;
  Vector rz = hp.cwiseProduct(ra);
  Vector rga =
      hpp.cwiseProduct(ra).cwiseProduct(v.w2) + hp.cwiseProduct(vw.w2);

  Vector out(dim_);
  for (int i = 0; i < n_in_; ++i)
    out.segment(i * hidden_, hidden_) = rga * x[i];
  out.segment(hidden_ * n_in_, hidden_) = rga;
  out.segment(hidden_ * n_in_ + hidden_, hidden_) = rz;
  out[dim_ - 1] = 0.0;
  return out;
}

LinearValueModel::LinearValueModel(Matrix features)
    : features_(std::move(features)) {
  if (features_.rows() < 1 || features_.cols() < 1)
    throw std::invalid_argument("LinearValueModel: empty feature table");
}

LinearValueModel LinearValueModel::one_hot_features(int n_states) {
  return LinearValueModel(Matrix::Identity(n_states, n_states));
}

Vector LinearValueModel::grad(const VectorRef& theta, int input) const {
  (void)theta;
  if (input < 0 || input >= num_inputs())
    throw std::invalid_argument("LinearValueModel: input id out of range");
  return features_.row(input).transpose();
}

Vector LinearValueModel::hvp(const VectorRef& theta, int input,
                             const VectorRef& w) const {
  (void)theta;
  (void)input;
  (void)w;
  return Vector::Zero(param_dim());
}

CartPoleEncoder CartPoleEncoder::standard() {
  CartPoleEncoder e;
  e.scales.resize(4);
  e.scales << 2.4, 3.0, 12.0 * 3.14159265358979323846 / 180.0, 3.0;
  e.n_actions = 2;
  return e;
}

Vector CartPoleEncoder::state_vec(const CartPoleState& s) const {
  Vector v(4);
  v << s.x / scales[0], s.x_dot / scales[1], s.theta / scales[2],
      s.theta_dot / scales[3];
  return v;
}

Vector CartPoleEncoder::sa_vec(const CartPoleState& s, int action) const {
  if (action < 0 || action >= n_actions)
    throw std::invalid_argument("CartPoleEncoder: action out of range");
  Vector v = Vector::Zero(4 + n_actions);
  v.head(4) = state_vec(s);
  v[4 + action] = 1.0;
  return v;
}

}  // namespace dgtd
