#pragma once

// Dense MLP kernel, softmax, Adam and a finite-difference oracle.
// Everything is double precision and allocation-light; nets here are small.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcir {

using Vec = std::vector<double>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic 64-bit generator (splitmix64). Same seed, same stream on
// every platform, unlike the std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::size_t below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // Independent child stream; used to give each seed/instance its own RNG.
  Rng split() { return Rng(next_u64() ^ 0x5851f42d4c957f2dULL); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

enum class Activation { identity, relu, tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

// Layer sizes run input -> hidden... -> output. Hidden layers use
// `hidden`, the last layer uses `output`.
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation hidden = Activation::relu;
  Activation output = Activation::identity;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ShapeError("MlpSpec: need at least 2 layer sizes");
    for (auto s : layer_sizes)
      if (s == 0) throw ShapeError("MlpSpec: layer sizes must be >= 1");
  }

  // Canonical layout: for each layer, weights W[out][in] row-major, then bias[out].
  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  std::size_t layer_offset(std::size_t layer) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer; ++l) n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

namespace detail {

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

// Derivative expressed through the pre-activation z and activation y.
inline double activate_grad(Activation a, double z, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - y * y;
  }
  return 1.0;
}

inline void check_shapes(const MlpSpec& spec, std::span<const double> params, std::span<const double> input) {
  spec.validate();
  if (params.size() != spec.param_count())
    throw ShapeError("mlp: params length " + std::to_string(params.size()) + " != expected " +
                     std::to_string(spec.param_count()));
  if (input.size() != spec.input_size())
    throw ShapeError("mlp: layer 0 expects input of length " + std::to_string(spec.input_size()) + ", got " +
                     std::to_string(input.size()));
}

// Activations for every layer (index 0 is the input) plus pre-activations.
struct ForwardTrace {
  std::vector<Vec> act;
  std::vector<Vec> pre;
};

inline ForwardTrace forward_trace(const MlpSpec& spec, std::span<const double> params,
                                  std::span<const double> input) {
  ForwardTrace tr;
  const std::size_t L = spec.num_layers();
  tr.act.reserve(L + 1);
  tr.pre.reserve(L);
  tr.act.emplace_back(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t nin = spec.layer_sizes[l], nout = spec.layer_sizes[l + 1];
    const double* W = params.data() + off;
    const double* b = W + nin * nout;
    const Vec& x = tr.act.back();
    Vec z(nout), y(nout);
    const Activation a = (l + 1 == L) ? spec.output : spec.hidden;
    for (std::size_t o = 0; o < nout; ++o) {
      double s = b[o];
      const double* row = W + o * nin;
      for (std::size_t k = 0; k < nin; ++k) s += row[k] * x[k];
      z[o] = s;
      y[o] = activate(a, s);
    }
    tr.pre.push_back(std::move(z));
    tr.act.push_back(std::move(y));
    off += nin * nout + nout;
  }
  return tr;
}

}  // namespace detail

inline Vec mlp_forward(const MlpSpec& spec, std::span<const double> params, std::span<const double> input) {
  detail::check_shapes(spec, params, input);
  return std::move(detail::forward_trace(spec, params, input).act.back());
}

struct MlpGrad {
  Vec params;
  Vec input;
};

// Reverse-mode gradient of dot(output_grad, mlp_forward(params, input)).
inline MlpGrad mlp_backward(const MlpSpec& spec, std::span<const double> params, std::span<const double> input,
                            std::span<const double> output_grad) {
  detail::check_shapes(spec, params, input);
  if (output_grad.size() != spec.output_size())
    throw ShapeError("mlp_backward: output_grad length " + std::to_string(output_grad.size()) + " != " +
                     std::to_string(spec.output_size()));
  const auto tr = detail::forward_trace(spec, params, input);
  const std::size_t L = spec.num_layers();
  MlpGrad g{Vec(params.size(), 0.0), {}};
  Vec delta(output_grad.begin(), output_grad.end());
  for (std::size_t li = L; li-- > 0;) {
    const std::size_t nin = spec.layer_sizes[li], nout = spec.layer_sizes[li + 1];
    const Activation a = (li + 1 == L) ? spec.output : spec.hidden;
    for (std::size_t o = 0; o < nout; ++o) delta[o] *= detail::activate_grad(a, tr.pre[li][o], tr.act[li + 1][o]);
    const std::size_t off = spec.layer_offset(li);
    const double* W = params.data() + off;
    double* gW = g.params.data() + off;
    double* gb = gW + nin * nout;
    const Vec& x = tr.act[li];
    Vec prev(nin, 0.0);
    for (std::size_t o = 0; o < nout; ++o) {
      const double d = delta[o];
      gb[o] = d;
      if (d == 0.0) continue;
      const double* row = W + o * nin;
      double* grow = gW + o * nin;
      for (std::size_t k = 0; k < nin; ++k) {
        grow[k] = d * x[k];
        prev[k] += row[k] * d;
      }
    }
    delta = std::move(prev);
  }
  g.input = std::move(delta);
  return g;
}

// Glorot-uniform weights, zero biases.
inline Vec init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Vec p(spec.param_count(), 0.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t nin = spec.layer_sizes[l], nout = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(nin + nout));
    for (std::size_t k = 0; k < nin * nout; ++k) p[off + k] = rng.uniform(-bound, bound);
    off += nin * nout + nout;
  }
  return p;
}

inline Vec softmax(std::span<const double> logits) {
  Vec p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += (p[k] = std::exp(logits[k] - m));
  for (auto& v : p) v /= s;
  return p;
}

inline Vec log_softmax(std::span<const double> logits) {
  Vec out(logits.size());
  if (logits.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double lse = m + std::log(s);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

// Pull a gradient on probabilities back to logits: J^T g with J = diag(p) - p p^T.
inline Vec softmax_vjp(std::span<const double> probs, std::span<const double> grad_probs) {
  double dot = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) dot += probs[k] * grad_probs[k];
  Vec out(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) out[k] = probs[k] * (grad_probs[k] - dot);
  return out;
}

struct AdamState {
  Vec first_moment;
  Vec second_moment;
  std::uint64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(std::size_t n, double lr) {
    AdamState s;
    s.first_moment.assign(n, 0.0);
    s.second_moment.assign(n, 0.0);
    s.learning_rate = lr;
    return s;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One descent step: params -= lr * mhat / (sqrt(vhat) + eps).
inline void adam_step(AdamState& st, std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size() || st.first_moment.size() != params.size() ||
      st.second_moment.size() != params.size())
    throw ShapeError("adam_step: length mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient entry");
  st.step_count += 1;
  const double t = static_cast<double>(st.step_count);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    st.first_moment[k] = st.beta1 * st.first_moment[k] + (1.0 - st.beta1) * grad[k];
    st.second_moment[k] = st.beta2 * st.second_moment[k] + (1.0 - st.beta2) * grad[k] * grad[k];
    const double mhat = st.first_moment[k] / c1;
    const double vhat = st.second_moment[k] / c2;
    params[k] -= st.learning_rate * mhat / (std::sqrt(vhat) + st.epsilon);
  }
}

// Central differences, one coordinate at a time.
inline Vec finite_diff_grad(const std::function<double(std::span<const double>)>& f, std::span<const double> params,
                            double h = 1e-6) {
  Vec p(params.begin(), params.end());
  Vec g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double orig = p[k];
    p[k] = orig + h;
    const double fp = f(p);
    p[k] = orig - h;
    const double fm = f(p);
    p[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Largest |a-b| / max(|a|,|b|,floor) over coordinates.
inline double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double den = std::max({std::abs(a[k]), std::abs(b[k]), floor});
    worst = std::max(worst, std::abs(a[k] - b[k]) / den);
  }
  return worst;
}

}  // namespace dcir
