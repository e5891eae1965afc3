#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aai/kernels.hpp"
#include "aai/rng.hpp"

namespace aai {

enum class Activation { Linear, LeakyRelu, Sigmoid };
enum class Mode { Train, Eval };

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kLogEps = 1e-7;  // clamp for adversarial log terms
inline constexpr double kCosEps = 1e-7;  // arccos stationary-point guard

struct BatchNorm {
  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
};

struct Layer {
  Matrix weight;  // in x out
  std::vector<double> bias;
  std::optional<BatchNorm> norm;
  Activation act = Activation::Linear;

  std::size_t in() const { return weight.rows; }
  std::size_t out() const { return weight.cols; }
};

struct LayerSpec {
  int width;
  bool norm;
  Activation act;
};

struct DenseNet {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.front().in(); }
  std::size_t out_dim() const { return layers.back().out(); }
  std::size_t param_count() const;
};

DenseNet make_dense_net(std::size_t in_dim, const std::vector<LayerSpec>& specs, Rng& rng);

// Batch-normalized leaky-relu hidden stack with a linear output layer; the
// shape of all three main networks.
std::vector<LayerSpec> hidden_stack(const std::vector<int>& hidden, int out_width,
                                    Activation out_act = Activation::Linear);

struct LayerCache {
  Matrix input;
  Matrix lin;     // pre-normalization linear output
  Matrix xhat;    // normalized activations (when the layer has norm)
  Matrix preact;  // input of the nonlinearity
  Matrix output;
  std::vector<double> mean, var;  // statistics used by this pass
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Mode mode = Mode::Eval;
  bool valid = false;
};

// Train mode uses batch statistics (B >= 2) and advances the running
// statistics by EMA; eval mode uses the running statistics.
Matrix forward(DenseNet& net, const Matrix& batch, Mode mode, ForwardCache* cache = nullptr);
Matrix forward_eval(const DenseNet& net, const Matrix& batch, ForwardCache* cache = nullptr);

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias, gamma, beta;
};

struct NetGrads {
  std::vector<LayerGrads> layers;
};

NetGrads make_grads(const DenseNet& net);
void zero_grads(NetGrads& g);

// Backpropagates d(loss)/d(output) through the recorded pass, accumulating
// parameter gradients into `grads`; returns d(loss)/d(input).
Matrix backward(const DenseNet& net, const ForwardCache& cache, const Matrix& dout,
                NetGrads& grads);

// arccos(<y_hat, y> / (|y_hat| |y|)): direction-only reconstruction error.
// Exactly 0 at y_hat == y and pi at y_hat == -y, with a zero (not NaN)
// gradient at both stationary points.
double cosine_loss(std::span<const double> y_hat, std::span<const double> y);
double cosine_loss_batch(const Matrix& y_hat, const Matrix& y, Matrix* grad = nullptr);

// Mean over rows of the squared row difference (the ablation loss);
// gradient is 2 (y_hat - y) / B.
double mse_loss_batch(const Matrix& y_hat, const Matrix& y, Matrix* grad = nullptr);

struct AdvLosses {
  double gen;   // -mean log(1 - T(fake)): the quantity the encoder ascends
  double disc;  // -mean log T(real) - mean log(1 - T(fake)): minimized by T
};

AdvLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<LayerGrads> m, v;
  long step = 0;
};

AdamState make_adam_state(const DenseNet& net);

// Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state, const AdamConfig& cfg);

// Raw binary (de)serialization used by the checkpoint container.
void write_net(std::ostream& out, const DenseNet& net);
DenseNet read_net(std::istream& in);
void write_adam(std::ostream& out, const AdamState& state);
AdamState read_adam(std::istream& in);

}  // namespace aai
