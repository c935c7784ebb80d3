// SPDX-License-Identifier: Apache-2.0
#include "nerfaug/nn.hpp"

#include <cmath>

#include <fmt/core.h>

#include "nerfaug/error.hpp"

namespace nerfaug::nn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw ConfigError(fmt::format("unknown activation '{}'", s));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// Vectorized forms. log1p(u) is evaluated as log(w) + (u - (w - 1)) / w with
// w = 1 + u, which recovers the rounding lost in w.
Eigen::ArrayXXd softplus_array(const Eigen::ArrayXXd& x) {
  const Eigen::ArrayXXd u = (-x.abs()).exp();
  const Eigen::ArrayXXd w = 1.0 + u;
  return x.max(0.0) + w.log() + (u - (w - 1.0)) / w;
}

Eigen::ArrayXXd sigmoid_array(const Eigen::ArrayXXd& x) { return 1.0 / (1.0 + (-x).exp()); }

}  // namespace

Matrix apply(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kSoftplus: return softplus_array(z.array()).matrix();
    case Activation::kSigmoid: return sigmoid_array(z.array()).matrix();
  }
  return z;
}

Vector softplus(const Vector& x) { return softplus_array(x.array()).matrix(); }
Vector sigmoid(const Vector& x) { return sigmoid_array(x.array()).matrix(); }

Matrix derivative(Activation a, const Matrix& z, const Matrix& y) {
  switch (a) {
    case Activation::kIdentity: return Matrix::Ones(z.rows(), z.cols());
    case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kSoftplus: return sigmoid_array(z.array()).matrix();
    case Activation::kSigmoid: return (y.array() * (1.0 - y.array())).matrix();
  }
  return Matrix::Ones(z.rows(), z.cols());
}

void MlpGrad::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

MlpGrad& MlpGrad::operator+=(const MlpGrad& o) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += o.weight[i];
    bias[i] += o.bias[i];
  }
  return *this;
}

Mlp::Mlp(int in, const std::vector<int>& hidden, int out, Activation hidden_act, Activation out_act, Rng& rng,
         bool zero_last_layer) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    const bool last = l + 2 == sizes.size();
    layer.weight.resize(sizes[l], sizes[l + 1]);
    layer.bias = Vector::Zero(sizes[l + 1]);
    layer.activation = last ? out_act : hidden_act;
    const double bound = std::sqrt(6.0 / sizes[l]);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = (last && zero_last_layer) ? 0.0 : uniform(rng, -bound, bound);
      }
    }
    layers_.push_back(std::move(layer));
  }
}

int Mlp::input_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows()); }
int Mlp::output_size() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Matrix Mlp::forward(const Matrix& x, MlpTape* tape) const {
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->post.clear();
  }
  Matrix a = x;
  for (const auto& layer : layers_) {
    Matrix z = a * layer.weight;
    z.rowwise() += layer.bias.transpose();
    Matrix y = apply(layer.activation, z);
    if (tape) {
      tape->inputs.push_back(std::move(a));
      tape->pre.push_back(std::move(z));
      tape->post.push_back(y);
    }
    a = std::move(y);
  }
  return a;
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& grad_out, MlpGrad& grads) const {
  Matrix g = grad_out;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& layer = layers_[k];
    if (layer.activation != Activation::kIdentity) {
      g = g.cwiseProduct(derivative(layer.activation, tape.pre[k], tape.post[k]));
    }
    grads.weight[k].noalias() += tape.inputs[k].transpose() * g;
    grads.bias[k] += g.colwise().sum().transpose();
    g = g * layer.weight.transpose();
  }
  return g;
}

MlpGrad Mlp::make_grad() const {
  MlpGrad g;
  for (const auto& l : layers_) {
    g.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vector::Zero(l.bias.size()));
  }
  return g;
}

bool Mlp::operator==(const Mlp& o) const {
  if (layers_.size() != o.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = o.layers_[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

void append_views(Mlp& mlp, const std::string& block, std::vector<TensorRef>& out) {
  for (auto& l : mlp.layers()) {
    out.push_back({block, {l.weight.data(), static_cast<std::size_t>(l.weight.size())}});
    out.push_back({block, {l.bias.data(), static_cast<std::size_t>(l.bias.size())}});
  }
}

void append_views(MlpGrad& grad, const std::string& block, std::vector<TensorRef>& out) {
  for (std::size_t i = 0; i < grad.weight.size(); ++i) {
    out.push_back({block, {grad.weight[i].data(), static_cast<std::size_t>(grad.weight[i].size())}});
    out.push_back({block, {grad.bias[i].data(), static_cast<std::size_t>(grad.bias[i].size())}});
  }
}

Adam::Adam(const std::vector<std::size_t>& tensor_sizes, AdamConfig cfg) : cfg_(cfg) {
  for (auto n : tensor_sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
                const std::vector<double>& lrs) {
  if (params.size() != m_.size() || grads.size() != m_.size() || lrs.size() != m_.size()) {
    throw ConfigError("Adam: tensor list does not match optimizer state");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values;
    auto g = grads[k].values;
    auto& m = m_[k];
    auto& v = v_[k];
    const double lr = lrs[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
    }
  }
}

}  // namespace nerfaug::nn
