// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradient engine for dense networks, plus Adam.
//
// Batches are row-major in the mathematical sense: one sample per row, so a
// layer computes Y = act(X W + 1 b^T) with W stored in x out.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nerfaug/rng.hpp"

namespace nerfaug::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { kIdentity, kRelu, kSoftplus, kSigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

Matrix apply(Activation a, const Matrix& z);
// d act(z) / dz evaluated elementwise, given both z and act(z).
Matrix derivative(Activation a, const Matrix& z, const Matrix& y);

double softplus(double x);
Vector softplus(const Vector& x);
Vector sigmoid(const Vector& x);
double sigmoid(double x);

struct DenseLayer {
  Matrix weight;  // in x out
  Vector bias;    // out
  Activation activation = Activation::kIdentity;
};

struct MlpGrad {
  std::vector<Matrix> weight;
  std::vector<Vector> bias;

  void set_zero();
  MlpGrad& operator+=(const MlpGrad& o);
};

// Intermediate values kept by forward() for backward().
struct MlpTape {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::vector<Matrix> post;    // activation output of each layer
};

class Mlp {
 public:
  Mlp() = default;
  // Kaiming-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  // With zero_last_layer the final weights and bias start at exactly 0.
  Mlp(int in, const std::vector<int>& hidden, int out, Activation hidden_act, Activation out_act, Rng& rng,
      bool zero_last_layer = false);

  int input_size() const;
  int output_size() const;
  std::size_t parameter_count() const;

  Matrix forward(const Matrix& x, MlpTape* tape = nullptr) const;
  // Accumulates parameter gradients into grads and returns dL/dx.
  Matrix backward(const MlpTape& tape, const Matrix& grad_out, MlpGrad& grads) const;

  MlpGrad make_grad() const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool operator==(const Mlp& o) const;

 private:
  std::vector<DenseLayer> layers_;
};

// A named contiguous parameter tensor.
struct TensorRef {
  std::string block;
  std::span<double> values;
};

struct ConstTensorRef {
  std::string block;
  std::span<const double> values;
};

// Flat views over an MLP's tensors in (W0, b0, W1, b1, ...) order.
void append_views(Mlp& mlp, const std::string& block, std::vector<TensorRef>& out);
void append_views(MlpGrad& grad, const std::string& block, std::vector<TensorRef>& out);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with one learning rate per tensor. State is plain data so it can be
// checkpointed and resumed.
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<std::size_t>& tensor_sizes, AdamConfig cfg = {});

  // params[i] += update from grads[i] with learning rate lrs[i].
  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
            const std::vector<double>& lrs);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<std::vector<double>>& first_moment() { return m_; }
  std::vector<std::vector<double>>& second_moment() { return v_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace nerfaug::nn
