#include "aai/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>

#include "aai/errors.hpp"

namespace aai {

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += l.weight.size() + l.bias.size();
    if (l.norm) n += l.norm->gamma.size() + l.norm->beta.size();
  }
  return n;
}

DenseNet make_dense_net(std::size_t in_dim, const std::vector<LayerSpec>& specs, Rng& rng) {
  if (specs.empty()) throw ConfigError("network needs at least one layer");
  DenseNet net;
  std::size_t in = in_dim;
  for (const auto& spec : specs) {
    if (spec.width < 1) throw ConfigError("layer width must be positive");
    Layer l;
    l.weight = Matrix(in, static_cast<std::size_t>(spec.width));
    const double scale = spec.act == Activation::LeakyRelu
                             ? std::sqrt(2.0 / static_cast<double>(in))
                             : std::sqrt(1.0 / static_cast<double>(in));
    for (double& w : l.weight.data) w = rng.normal(0.0, scale);
    l.bias.assign(spec.width, 0.0);
    if (spec.norm) {
      BatchNorm bn;
      bn.gamma.assign(spec.width, 1.0);
      bn.beta.assign(spec.width, 0.0);
      bn.running_mean.assign(spec.width, 0.0);
      bn.running_var.assign(spec.width, 1.0);
      l.norm = std::move(bn);
    }
    l.act = spec.act;
    net.layers.push_back(std::move(l));
    in = static_cast<std::size_t>(spec.width);
  }
  return net;
}

std::vector<LayerSpec> hidden_stack(const std::vector<int>& hidden, int out_width,
                                    Activation out_act) {
  std::vector<LayerSpec> specs;
  for (int w : hidden) specs.push_back({w, true, Activation::LeakyRelu});
  specs.push_back({out_width, false, out_act});
  return specs;
}

namespace {

void apply_activation(Matrix& m, Activation act) {
  switch (act) {
    case Activation::Linear:
      return;
    case Activation::LeakyRelu:
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < m.data.size(); ++i)
        if (m.data[i] < 0.0) m.data[i] *= kLeakySlope;
      return;
    case Activation::Sigmoid:
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < m.data.size(); ++i)
        m.data[i] = 1.0 / (1.0 + std::exp(-m.data[i]));
      return;
  }
}

Matrix forward_impl(const DenseNet& cnet, DenseNet* mutable_net, const Matrix& batch, Mode mode,
                    ForwardCache* cache) {
  if (batch.rows == 0) throw DataError("empty batch");
  if (batch.cols != cnet.in_dim()) throw DataError("batch width does not match network input");
  if (mode == Mode::Train && batch.rows < 2)
    throw DataError("train-mode forward needs a batch of at least 2 for batch statistics");

  if (cache) {
    cache->layers.assign(cnet.layers.size(), {});
    cache->mode = mode;
    cache->valid = true;
  }

  Matrix x = batch;
  for (std::size_t li = 0; li < cnet.layers.size(); ++li) {
    const Layer& l = cnet.layers[li];
    LayerCache* lc = cache ? &cache->layers[li] : nullptr;
    if (lc) lc->input = x;

    Matrix lin;
    matmul(x, l.weight, lin);
    add_row_vector(lin, l.bias);

    Matrix pre;
    if (l.norm) {
      std::vector<double> mean, var;
      if (mode == Mode::Train) {
        col_mean_var(lin, mean, var);
        if (mutable_net) {
          BatchNorm& bn = *mutable_net->layers[li].norm;
          for (std::size_t j = 0; j < mean.size(); ++j) {
            bn.running_mean[j] = (1.0 - kBnMomentum) * bn.running_mean[j] + kBnMomentum * mean[j];
            bn.running_var[j] = (1.0 - kBnMomentum) * bn.running_var[j] + kBnMomentum * var[j];
          }
        }
      } else {
        mean = l.norm->running_mean;
        var = l.norm->running_var;
      }
      Matrix xhat(lin.rows, lin.cols);
      pre = Matrix(lin.rows, lin.cols);
      const auto& bn = *l.norm;
#pragma omp parallel for schedule(static)
      for (std::size_t j = 0; j < lin.cols; ++j) {
        const double inv_std = 1.0 / std::sqrt(var[j] + kBnEps);
        for (std::size_t i = 0; i < lin.rows; ++i) {
          const double xh = (lin(i, j) - mean[j]) * inv_std;
          xhat(i, j) = xh;
          pre(i, j) = bn.gamma[j] * xh + bn.beta[j];
        }
      }
      if (lc) {
        lc->lin = std::move(lin);
        lc->xhat = std::move(xhat);
        lc->mean = std::move(mean);
        lc->var = std::move(var);
      }
    } else {
      if (lc) lc->lin = lin;
      pre = std::move(lin);
    }

    if (lc) lc->preact = pre;
    apply_activation(pre, l.act);
    if (lc) lc->output = pre;
    x = std::move(pre);
  }
  return x;
}

}  // namespace

Matrix forward(DenseNet& net, const Matrix& batch, Mode mode, ForwardCache* cache) {
  return forward_impl(net, mode == Mode::Train ? &net : nullptr, batch, mode, cache);
}

Matrix forward_eval(const DenseNet& net, const Matrix& batch, ForwardCache* cache) {
  return forward_impl(net, nullptr, batch, Mode::Eval, cache);
}

NetGrads make_grads(const DenseNet& net) {
  NetGrads g;
  for (const auto& l : net.layers) {
    LayerGrads lg;
    lg.weight = Matrix(l.weight.rows, l.weight.cols);
    lg.bias.assign(l.bias.size(), 0.0);
    if (l.norm) {
      lg.gamma.assign(l.norm->gamma.size(), 0.0);
      lg.beta.assign(l.norm->beta.size(), 0.0);
    }
    g.layers.push_back(std::move(lg));
  }
  return g;
}

void zero_grads(NetGrads& g) {
  for (auto& l : g.layers) {
    std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
    std::fill(l.gamma.begin(), l.gamma.end(), 0.0);
    std::fill(l.beta.begin(), l.beta.end(), 0.0);
  }
}

Matrix backward(const DenseNet& net, const ForwardCache& cache, const Matrix& dout,
                NetGrads& grads) {
  if (!cache.valid) throw DataError("backward called without a recorded forward pass");
  if (grads.layers.size() != net.layers.size()) throw DataError("gradient shape mismatch");

  Matrix d = dout;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    const LayerCache& lc = cache.layers[li];
    LayerGrads& lg = grads.layers[li];

    // Through the nonlinearity.
    switch (l.act) {
      case Activation::Linear:
        break;
      case Activation::LeakyRelu:
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < d.data.size(); ++i)
          if (lc.preact.data[i] < 0.0) d.data[i] *= kLeakySlope;
        break;
      case Activation::Sigmoid:
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < d.data.size(); ++i) {
          const double y = lc.output.data[i];
          d.data[i] *= y * (1.0 - y);
        }
        break;
    }

    Matrix dlin;
    if (l.norm) {
      const auto& bn = *l.norm;
      const auto rows = d.rows;
      const double b = static_cast<double>(rows);
      dlin = Matrix(d.rows, d.cols);
#pragma omp parallel for schedule(static)
      for (std::size_t j = 0; j < d.cols; ++j) {
        const double inv_std = 1.0 / std::sqrt(lc.var[j] + kBnEps);
        double dgamma = 0.0, dbeta = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          dgamma += d(i, j) * lc.xhat(i, j);
          dbeta += d(i, j);
        }
        lg.gamma[j] += dgamma;
        lg.beta[j] += dbeta;

        if (cache.mode == Mode::Train) {
          // Gradients flow through the batch statistics.
          double dvar = 0.0;
          for (std::size_t i = 0; i < rows; ++i)
            dvar += d(i, j) * bn.gamma[j] * (lc.lin(i, j) - lc.mean[j]);
          dvar *= -0.5 * inv_std * inv_std * inv_std;
          double dmean = 0.0, dsum = 0.0;
          for (std::size_t i = 0; i < rows; ++i) {
            dmean += d(i, j) * bn.gamma[j];
            dsum += lc.lin(i, j) - lc.mean[j];
          }
          dmean = -dmean * inv_std - 2.0 * dvar * dsum / b;
          for (std::size_t i = 0; i < rows; ++i)
            dlin(i, j) = d(i, j) * bn.gamma[j] * inv_std +
                         dvar * 2.0 * (lc.lin(i, j) - lc.mean[j]) / b + dmean / b;
        } else {
          for (std::size_t i = 0; i < rows; ++i) dlin(i, j) = d(i, j) * bn.gamma[j] * inv_std;
        }
      }
    } else {
      dlin = std::move(d);
    }

    Matrix dw;
    matmul_tn(lc.input, dlin, dw);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < dw.data.size(); ++i) lg.weight.data[i] += dw.data[i];
    std::vector<double> db;
    col_sum(dlin, db);
    for (std::size_t j = 0; j < db.size(); ++j) lg.bias[j] += db[j];

    Matrix dx;
    matmul_nt(dlin, l.weight, dx);
    d = std::move(dx);
  }
  return d;
}

namespace {

// Shared by the single-pair and batch cosine losses. Returns arccos of the
// normalized inner product, snapping to the exact stationary values at the
// guarded ends so that y_hat == y gives 0 and y_hat == -y gives pi.
double cosine_from_u(double u) {
  if (u >= 1.0 - kCosEps) return 0.0;
  if (u <= -1.0 + kCosEps) return std::numbers::pi;
  return std::acos(u);
}

}  // namespace

double cosine_loss(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.size() != y.size() || y.empty()) throw DataError("cosine loss shape mismatch");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    dot += y_hat[i] * y[i];
    n1 += y_hat[i] * y_hat[i];
    n2 += y[i] * y[i];
  }
  if (n1 == 0.0 || n2 == 0.0) throw DataError("undefined direction: zero-norm input");
  return cosine_from_u(dot / (std::sqrt(n1) * std::sqrt(n2)));
}

double cosine_loss_batch(const Matrix& y_hat, const Matrix& y, Matrix* grad) {
  if (!y_hat.same_shape(y) || y.rows == 0) throw DataError("cosine loss shape mismatch");
  if (grad) *grad = Matrix(y.rows, y.cols);
  const double inv_b = 1.0 / static_cast<double>(y.rows);

  std::vector<double> row_loss(y.rows);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < y.rows; ++i) {
    const double* yh = y_hat.row(i);
    const double* yt = y.row(i);
    double dot = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < y.cols; ++j) {
      dot += yh[j] * yt[j];
      s1 += yh[j] * yh[j];
      s2 += yt[j] * yt[j];
    }
    if (s1 == 0.0 || s2 == 0.0) {
      row_loss[i] = -1.0;  // flagged, reported outside the parallel region
      continue;
    }
    const double n1 = std::sqrt(s1);
    const double n2 = std::sqrt(s2);
    const double u = dot / (n1 * n2);
    row_loss[i] = cosine_from_u(u);
    if (grad) {
      double* g = grad->row(i);
      if (u >= 1.0 - kCosEps || u <= -1.0 + kCosEps) continue;  // stationary: exact zero row
      const double coeff = -inv_b / std::sqrt(1.0 - u * u);
      for (std::size_t j = 0; j < y.cols; ++j)
        g[j] = coeff * (yt[j] / (n1 * n2) - u * yh[j] / s1);
    }
  }
  double total = 0.0;
  for (double v : row_loss) {
    if (v < 0.0) throw DataError("undefined direction: zero-norm input");
    total += v;
  }
  return total * inv_b;
}

double mse_loss_batch(const Matrix& y_hat, const Matrix& y, Matrix* grad) {
  if (!y_hat.same_shape(y) || y.rows == 0) throw DataError("mse loss shape mismatch");
  if (grad) *grad = Matrix(y.rows, y.cols);
  const double inv_b = 1.0 / static_cast<double>(y.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const double diff = y_hat.data[i] - y.data[i];
    total += diff * diff;
    if (grad) grad->data[i] = 2.0 * diff * inv_b;
  }
  return total * inv_b;
}

AdvLosses adversarial_losses(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw DataError("empty discriminator batch");
  double log_real = 0.0;
  for (double p : d_real) log_real += std::log(std::clamp(p, kLogEps, 1.0 - kLogEps));
  log_real /= static_cast<double>(d_real.size());
  double log_one_minus_fake = 0.0;
  for (double p : d_fake)
    log_one_minus_fake += std::log(1.0 - std::clamp(p, kLogEps, 1.0 - kLogEps));
  log_one_minus_fake /= static_cast<double>(d_fake.size());
  return {-log_one_minus_fake, -log_real - log_one_minus_fake};
}

AdamState make_adam_state(const DenseNet& net) {
  AdamState s;
  s.m = make_grads(net).layers;
  s.v = make_grads(net).layers;
  return s;
}

namespace {

void adam_update(std::span<double> p, std::span<const double> g, std::span<double> m,
                 std::span<double> v, const AdamConfig& cfg, double bc1, double bc2,
                 const char* name) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(g[i]))
      throw NumericError(std::string("non-finite gradient in ") + name);
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state, const AdamConfig& cfg) {
  if (cfg.lr <= 0.0) throw ConfigError("learning rate must be positive");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Layer& l = net.layers[li];
    const LayerGrads& g = grads.layers[li];
    const std::string base = "layer" + std::to_string(li);
    adam_update(l.weight.data, g.weight.data, state.m[li].weight.data, state.v[li].weight.data,
                cfg, bc1, bc2, (base + ".weight").c_str());
    adam_update(l.bias, g.bias, state.m[li].bias, state.v[li].bias, cfg, bc1, bc2,
                (base + ".bias").c_str());
    if (l.norm) {
      adam_update(l.norm->gamma, g.gamma, state.m[li].gamma, state.v[li].gamma, cfg, bc1, bc2,
                  (base + ".gamma").c_str());
      adam_update(l.norm->beta, g.beta, state.m[li].beta, state.v[li].beta, cfg, bc1, bc2,
                  (base + ".beta").c_str());
    }
  }
}

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint stream");
  return v;
}

void write_vec(std::ostream& out, const std::vector<double>& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_vec(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint stream");
  return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_pod<std::uint64_t>(out, m.rows);
  write_pod<std::uint64_t>(out, m.cols);
  out.write(reinterpret_cast<const char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

Matrix read_matrix(std::istream& in) {
  Matrix m;
  m.rows = read_pod<std::uint64_t>(in);
  m.cols = read_pod<std::uint64_t>(in);
  m.data.resize(m.rows * m.cols);
  in.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint stream");
  return m;
}

}  // namespace

void write_net(std::ostream& out, const DenseNet& net) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    write_matrix(out, l.weight);
    write_vec(out, l.bias);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(l.act));
    write_pod<std::uint8_t>(out, l.norm.has_value() ? 1 : 0);
    if (l.norm) {
      write_vec(out, l.norm->gamma);
      write_vec(out, l.norm->beta);
      write_vec(out, l.norm->running_mean);
      write_vec(out, l.norm->running_var);
    }
  }
}

DenseNet read_net(std::istream& in) {
  DenseNet net;
  const auto n = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    Layer l;
    l.weight = read_matrix(in);
    l.bias = read_vec(in);
    l.act = static_cast<Activation>(read_pod<std::uint8_t>(in));
    if (read_pod<std::uint8_t>(in)) {
      BatchNorm bn;
      bn.gamma = read_vec(in);
      bn.beta = read_vec(in);
      bn.running_mean = read_vec(in);
      bn.running_var = read_vec(in);
      l.norm = std::move(bn);
    }
    net.layers.push_back(std::move(l));
  }
  return net;
}

namespace {

void write_layer_grads(std::ostream& out, const LayerGrads& g) {
  write_matrix(out, g.weight);
  write_vec(out, g.bias);
  write_vec(out, g.gamma);
  write_vec(out, g.beta);
}

LayerGrads read_layer_grads(std::istream& in) {
  LayerGrads g;
  g.weight = read_matrix(in);
  g.bias = read_vec(in);
  g.gamma = read_vec(in);
  g.beta = read_vec(in);
  return g;
}

}  // namespace

void write_adam(std::ostream& out, const AdamState& state) {
  write_pod<std::int64_t>(out, state.step);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(state.m.size()));
  for (const auto& g : state.m) write_layer_grads(out, g);
  for (const auto& g : state.v) write_layer_grads(out, g);
}

AdamState read_adam(std::istream& in) {
  AdamState s;
  s.step = read_pod<std::int64_t>(in);
  const auto n = read_pod<std::uint32_t>(in);
  s.m.resize(n);
  s.v.resize(n);
  for (auto& g : s.m) g = read_layer_grads(in);
  for (auto& g : s.v) g = read_layer_grads(in);
  return s;
}

}  // namespace aai
