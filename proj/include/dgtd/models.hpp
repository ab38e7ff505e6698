#pragma once

#include <cstdint>

#include "dgtd/cartpole.hpp"
#include "dgtd/support_grid.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

Vector one_hot(int index, int n);

Vector pmf_from_cdf(const VectorRef& cdf);
Real mean_from_cdf(const SupportGrid& grid, const VectorRef& cdf);

// Evaluate F (or its gradient) at an off-grid argument x by rounding x to
// the nearest atom. This is how targets of the form F(x', (z_j - r) / gamma)
// are read off a model that is only defined on the grid.
template <class Model>
Real cdf_at(const Model& model, const VectorRef& theta,
            const typename Model::Input& input, Real x,
            const SupportGrid& grid) {
  const Vector f = model.cdf(theta, input);
  return f[grid.project_index(x)];
}

template <class Model>
Vector grad_cdf_at(const Model& model, const VectorRef& theta,
                   const typename Model::Input& input, Real x,
                   const SupportGrid& grid) {
  return model.grad_cdf(theta, input, grid.project_index(x));
}

// CDF model that is linear in theta: F_theta(x, z_j) = phi(x, z_j)^T theta
// with a fixed feature table. Inputs are row ids (states or state-action
// pairs); the feature rows for input x occupy rows [x*m, x*m + m).
class LinearCdfModel {
 public:
  using Input = int;

  LinearCdfModel(Matrix features, int num_inputs, int m);

  static LinearCdfModel one_hot_features(int num_inputs, int m);
  static LinearCdfModel random_features(int num_inputs, int m, int dim,
                                        std::uint64_t seed);

  int param_dim() const { return static_cast<int>(features_.cols()); }
  int num_atoms() const { return m_; }
  int num_inputs() const { return num_inputs_; }
  const Matrix& features() const { return features_; }

  Vector init_theta(std::uint64_t seed) const;

  Eigen::Block<const Matrix> cdf_jacobian(const VectorRef& theta,
                                          int input) const {
    (void)theta;
    return feature_block(input);
  }
  Eigen::Block<const Matrix> feature_block(int input) const;

  Vector cdf(const VectorRef& theta, int input) const {
    return feature_block(input) * theta;
  }
  Vector grad_cdf(const VectorRef& theta, int input, int j) const;

  // F is linear in theta, so every Hessian term vanishes exactly.
  Vector hvp(const VectorRef& theta, int input, int j,
             const VectorRef& w) const;
  Vector hvp_weighted(const VectorRef& theta, int input,
                      const VectorRef& coeffs, const VectorRef& w) const;

 private:
  Matrix features_;
  int num_inputs_;
  int m_;
};

enum class Activation { tanh_act, relu_act };

// One-hidden-layer network with a softmax output layer read as a pmf over
// the atom grid: a = W1 x + b1, z = h(a), y = W2 z + b2, p = softmax(y),
// F(x, z_j) = sum_{k <= j} p_k. Parameters are packed column-major as
// [W1, b1, W2, b2].
class SoftmaxMlpCdfModel {
 public:
  using Input = Vector;

  SoftmaxMlpCdfModel(int n_in, int hidden, int m, Activation activation);

  int param_dim() const { return dim_; }
  int num_atoms() const { return m_; }
  int input_dim() const { return n_in_; }
  int hidden_dim() const { return hidden_; }
  Activation activation() const { return activation_; }

  Vector init_theta(std::uint64_t seed) const;

  struct Forward {
    Vector a;    // hidden pre-activations
    Vector z;    // hidden activations
    Vector y;    // logits
    Vector p;    // softmax pmf
    Vector cdf;  // running sums of p
  };
  Forward forward(const VectorRef& theta, const VectorRef& x) const;

  Vector cdf(const VectorRef& theta, const VectorRef& x) const;
  Vector pmf(const VectorRef& theta, const VectorRef& x) const;

  Matrix cdf_jacobian(const VectorRef& theta, const VectorRef& x) const;
  Vector grad_cdf(const VectorRef& theta, const VectorRef& x, int j) const;

  // sum_j coeffs_j * Hessian(F(x, z_j)) * w, evaluated with one forward and
  // one backward sweep of the directional-derivative (R) operator.
  Vector hvp_weighted(const VectorRef& theta, const VectorRef& x,
                      const VectorRef& coeffs, const VectorRef& w) const;
  Vector hvp(const VectorRef& theta, const VectorRef& x, int j,
             const VectorRef& w) const;

 private:
  friend class QMlpModel;
  struct Views {
    Eigen::Map<const Matrix> w1;
    Eigen::Map<const Vector> b1;
    Eigen::Map<const Matrix> w2;
    Eigen::Map<const Vector> b2;
  };
  Views views(const VectorRef& theta) const;
  void act(const Vector& a, Vector& z, Vector& hp, Vector* hpp) const;

  int n_in_;
  int hidden_;
  int m_;
  int dim_;
  Activation activation_;
};

// Scalar state(-action) value network with the same hidden layer; used by
// the nonlinear GTD2/TDC baselines. Parameters pack as [W1, b1, w2, b2].
class QMlpModel {
 public:
  using Input = Vector;

  QMlpModel(int n_in, int hidden, Activation activation);

  int param_dim() const { return dim_; }
  int input_dim() const { return n_in_; }
  int hidden_dim() const { return hidden_; }

  Vector init_theta(std::uint64_t seed) const;

  Real value(const VectorRef& theta, const VectorRef& x) const;
  Vector grad(const VectorRef& theta, const VectorRef& x) const;
  Vector hvp(const VectorRef& theta, const VectorRef& x,
             const VectorRef& w) const;

 private:
  int n_in_;
  int hidden_;
  int dim_;
  Activation activation_;
};

// Scalar value model linear in theta with a fixed per-state feature table.
class LinearValueModel {
 public:
  using Input = int;

  explicit LinearValueModel(Matrix features);

  static LinearValueModel one_hot_features(int n_states);

  int param_dim() const { return static_cast<int>(features_.cols()); }
  int num_inputs() const { return static_cast<int>(features_.rows()); }
  const Matrix& features() const { return features_; }

  Real value(const VectorRef& theta, int input) const {
    return features_.row(input).dot(theta);
  }
  Vector grad(const VectorRef& theta, int input) const;
  Vector hvp(const VectorRef& theta, int input, const VectorRef& w) const;

 private:
  Matrix features_;
};

// Fixed per-dimension scales for cart-pole observations, plus an optional
// one-hot action block for state-action inputs.
struct CartPoleEncoder {
  Vector scales;  // 4 entries
  int n_actions = 2;

  static CartPoleEncoder standard();

  Vector state_vec(const CartPoleState& s) const;
  Vector sa_vec(const CartPoleState& s, int action) const;
  int state_dim() const { return 4; }
  int sa_dim() const { return 4 + n_actions; }
};

}  // namespace dgtd
