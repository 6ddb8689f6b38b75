#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memefusion/rng.hpp"

namespace memefusion {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  /// Decoupled weight decay applies only to params with decay = true
  /// (weights; never biases, embeddings or normalization gains).
  bool decay = true;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols, bool decays)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)), decay(decays) {}

  void zero_grad() { grad.setZero(); }
};

using ParamList = std::vector<Param*>;

void zero_grads(const ParamList& params);

/// Affine map y = x W^T + b applied row-wise to a batch (rows = samples).
struct Linear {
  Param weight;  // out x in
  Param bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& name, int in, int out);

  int in_dim() const { return static_cast<int>(weight.value.cols()); }
  int out_dim() const { return static_cast<int>(weight.value.rows()); }

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for weights and biases.
  void init(Rng& rng);

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);
  void collect(ParamList& out) { out.push_back(&weight); out.push_back(&bias); }
};

/// Per-row layer normalization with learned gain and shift.
struct LayerNorm {
  Param gain;   // 1 x dim
  Param shift;  // 1 x dim
  double eps = 1e-5;

  struct Cache {
    Matrix normalized;
    Vector inv_std;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim);

  Matrix forward(const Matrix& x, Cache* cache) const;
  Matrix backward(const Cache& cache, const Matrix& dy);
  void collect(ParamList& out) { out.push_back(&gain); out.push_back(&shift); }
};

/// Exact (erf) GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

/// Row-wise softmax, max-shifted.
Matrix softmax_rows(const Matrix& logits);
Vector softmax(const Vector& logits);

/// Inverted-dropout keep mask (entries 0 or 1/(1-rate)).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

/// Decoupled-weight-decay Adam over a fixed parameter set.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
  };

  AdamW(ParamList params, Options opts);

  void step(double lr);
  const ParamList& params() const { return params_; }
  long steps() const { return t_; }

 private:
  ParamList params_;
  Options opts_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace memefusion
