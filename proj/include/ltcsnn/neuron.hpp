#pragma once

// Discrete-time neuron models: LIF, adaptive LIF and the liquid time
// constant (LTC) neuron, each in a spiking and a ReLU-converted variant.
//
// Every model is available in two forms:
//   * in-place kernels over spans (`*_update`) used by the network engine,
//   * value-semantics step functions (`*_step`, `relu_step`) that take a
//     NeuronState and return the next one.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/matrix.hpp"

namespace ltcsnn {

enum class Activation {
  spiking,  ///< binary spikes with reset
  relu,     ///< s = max(0, u - theta), no reset
};

inline const char* to_string(Activation a) { return a == Activation::spiking ? "spiking" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "spiking") return Activation::spiking;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown mode '" + s + "' (expected spiking|relu)");
}

inline constexpr double kDefaultB0 = 0.1;
inline constexpr double kDefaultBeta = 1.8;

template <std::floating_point T>
struct LifParams {
  T tau_m = T{2};
  T r_m = T{1};
  T theta = T{1};
  T u_reset = T{0};

  void validate() const {
    if (!(tau_m >= T{1})) throw ConfigError("LIF tau_m must be >= 1");
    if (!(theta > u_reset)) throw ConfigError("LIF theta must exceed u_reset");
  }
};

template <std::floating_point T>
struct AlifParams {
  T alpha = T{0.9};
  T rho = T{0.95};
  T r_m = T{1};
  T b0 = T(kDefaultB0);
  T beta = T(kDefaultBeta);
  T dt = T{1};
  T u_reset = T{0};

  /// alpha = exp(-dt / tau_m), rho = exp(-dt / tau_adp).
  static AlifParams from_time_constants(T tau_m, T tau_adp, T dt = T{1}) {
    AlifParams p;
    p.dt = dt;
    p.alpha = std::exp(-dt / tau_m);
    p.rho = std::exp(-dt / tau_adp);
    return p;
  }

  void validate() const {
    if (!(alpha > T{0} && alpha < T{1})) throw ConfigError("ALIF alpha must lie in (0,1)");
    if (!(rho > T{0} && rho < T{1})) throw ConfigError("ALIF rho must lie in (0,1)");
    if (!(b0 > T{0})) throw ConfigError("ALIF b0 must be positive");
    if (!(beta >= T{0})) throw ConfigError("ALIF beta must be non-negative");
  }
};

/// Scalar constants of the LTC neuron. The time constants themselves are
/// computed per step by LtcTauWeights.
template <std::floating_point T>
struct LtcParams {
  T b0 = T(kDefaultB0);
  T beta = T(kDefaultBeta);
  T u_rest = T{0};
};

/// Sigmoid-squashed affine maps producing rho and 1/tau_m.
/// Both matrices are (input_dim + width) x width: rows [0, input_dim) act on
/// the input, rows [input_dim, input_dim + width) on the neuron's own b or u.
template <std::floating_point T>
struct LtcTauWeights {
  Matrix<T> w_tau_m;
  Matrix<T> w_tau_adp;
  std::vector<T> bias_tau_m;
  std::vector<T> bias_tau_adp;

  static LtcTauWeights zeros(std::size_t input_dim, std::size_t width) {
    return {Matrix<T>(input_dim + width, width), Matrix<T>(input_dim + width, width),
            std::vector<T>(width, T{0}), std::vector<T>(width, T{0})};
  }

  std::size_t width() const noexcept { return w_tau_m.cols(); }
  std::size_t input_dim() const noexcept { return w_tau_m.rows() - w_tau_m.cols(); }

  void check_shapes(std::size_t input_dim, std::size_t width) const {
    detail::require(w_tau_m.rows() == input_dim + width && w_tau_m.cols() == width,
                    "w_tau_m must be (input_dim + width) x width");
    detail::require(w_tau_adp.rows() == input_dim + width && w_tau_adp.cols() == width,
                    "w_tau_adp must be (input_dim + width) x width");
    detail::require(bias_tau_m.size() == width && bias_tau_adp.size() == width,
                    "tau bias vectors must have one entry per neuron");
  }
};

/// Mutable views onto one neuron group's state.
template <std::floating_point T>
struct StateView {
  std::span<T> u;
  std::span<T> b;
  std::span<T> s;
  std::span<T> theta;
};

template <std::floating_point T>
struct NeuronState {
  std::vector<T> u;
  std::vector<T> b;
  std::vector<T> s;
  std::vector<T> theta;

  /// Resting state; theta starts at `theta0` (b0 for adaptive neurons).
  static NeuronState resting(std::size_t n, T theta0 = T{0}) {
    return {std::vector<T>(n, T{0}), std::vector<T>(n, T{0}), std::vector<T>(n, T{0}),
            std::vector<T>(n, theta0)};
  }

  std::size_t size() const noexcept { return u.size(); }

  StateView<T> view() noexcept { return {u, b, s, theta}; }

  void check() const {
    detail::require(b.size() == u.size() && s.size() == u.size() && theta.size() == u.size(),
                    "neuron state vectors must have equal length");
  }

  friend bool operator==(const NeuronState&, const NeuronState&) = default;
};

template <std::floating_point T>
T sigmoid(T z) {
  const T y = T{1} / (T{1} + std::exp(-z));
  // Keep the result strictly inside (0,1) even where it rounds to 0 or 1.
  return std::clamp(y, std::numeric_limits<T>::min(),
                    T{1} - std::numeric_limits<T>::epsilon() / T{2});
}

namespace detail {

template <std::floating_point T>
T fire(T u, T theta, Activation mode) {
  if (mode == Activation::spiking) return u >= theta ? T{1} : T{0};
  return std::max(T{0}, u - theta);
}

template <std::floating_point T>
void check_finite(std::span<const T> v, const char* what) {
  if (!all_finite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

}  // namespace detail

/// I = W * s_pre + I_ext where W is stored fan-in major (presyn x postsyn).
template <std::floating_point T>
std::vector<T> input_current(const Matrix<T>& weights, std::span<const T> presyn_spikes,
                             std::span<const T> i_ext) {
  detail::require(weights.rows() == presyn_spikes.size(),
                  "input_current: weight rows must match presynaptic count");
  detail::require(weights.cols() == i_ext.size(),
                  "input_current: weight cols must match external current length");
  std::vector<T> out(i_ext.begin(), i_ext.end());
  detail::accumulate_vecmat<T>(presyn_spikes, weights, out);
  return out;
}

template <std::floating_point T>
std::vector<T> input_current(const Matrix<T>& weights, std::span<const T> presyn_spikes) {
  std::vector<T> zero(weights.cols(), T{0});
  return input_current<T>(weights, presyn_spikes, zero);
}

// --- in-place kernels -----------------------------------------------------

template <std::floating_point T>
void lif_update(StateView<T> st, std::span<const T> current, const LifParams<T>& p,
                Activation mode) {
  const T k = T{1} / p.tau_m;
  for (std::size_t i = 0; i < st.u.size(); ++i) {
    T u = st.u[i] * (T{1} - k) + k * p.r_m * current[i];
    const T s = detail::fire(u, p.theta, mode);
    if (mode == Activation::spiking) u = u * (T{1} - s) + p.u_reset * s;
    st.u[i] = u;
    st.s[i] = s;
    st.theta[i] = p.theta;
  }
}

/// The -theta*s_prev term uses the threshold carried in the state, i.e. the
/// one computed at the previous step.
template <std::floating_point T>
void alif_update(StateView<T> st, std::span<const T> current, const AlifParams<T>& p,
                 Activation mode) {
  for (std::size_t i = 0; i < st.u.size(); ++i) {
    const T s_prev = st.s[i];
    T u = p.alpha * st.u[i] + (T{1} - p.alpha) * p.r_m * current[i] - st.theta[i] * s_prev;
    const T b = p.rho * st.b[i] + (T{1} - p.rho) * s_prev;
    const T theta = p.b0 + p.beta * b;
    const T s = detail::fire(u, theta, mode);
    if (mode == Activation::spiking) u = u * (T{1} - s) + p.u_reset * s;
    st.u[i] = u;
    st.b[i] = b;
    st.s[i] = s;
    st.theta[i] = theta;
  }
}

/// rho = sigma([x, b_prev] W_adp + bias_adp), inv_tau = sigma([x, u_prev] W_m + bias_m).
template <std::floating_point T>
void ltc_time_constants(std::span<const T> x, std::span<const T> u_prev,
                        std::span<const T> b_prev, const LtcTauWeights<T>& tw,
                        std::span<T> rho, std::span<T> inv_tau) {
  const std::size_t nx = x.size();
  std::copy(tw.bias_tau_adp.begin(), tw.bias_tau_adp.end(), rho.begin());
  std::copy(tw.bias_tau_m.begin(), tw.bias_tau_m.end(), inv_tau.begin());
  detail::accumulate_vecmat<T>(x, tw.w_tau_adp, rho, 0);
  detail::accumulate_vecmat<T>(b_prev, tw.w_tau_adp, rho, nx);
  detail::accumulate_vecmat<T>(x, tw.w_tau_m, inv_tau, 0);
  detail::accumulate_vecmat<T>(u_prev, tw.w_tau_m, inv_tau, nx);
  for (auto& z : rho) z = sigmoid(z);
  for (auto& z : inv_tau) z = sigmoid(z);
}

/// LTC update. `x` holds one drive value per neuron (the membrane relaxes
/// towards it), so the tau networks see an input of the same width.
/// `rho` and `inv_tau` are caller-provided workspaces of length width and hold
/// the step's time constants on return.
template <std::floating_point T>
void ltc_update(StateView<T> st, std::span<const T> x, const LtcTauWeights<T>& tw,
                const LtcParams<T>& p, Activation mode, std::span<T> rho,
                std::span<T> inv_tau) {
  ltc_time_constants<T>(x, st.u, st.b, tw, rho, inv_tau);
  for (std::size_t i = 0; i < st.u.size(); ++i) {
    const T b = rho[i] * st.b[i] + (T{1} - rho[i]) * st.s[i];
    const T theta = p.b0 + p.beta * b;
    // du = (-u + x) / tau_m, applied as a product with the sigmoid output.
    T u = st.u[i] + (x[i] - st.u[i]) * inv_tau[i];
    const T s = detail::fire(u, theta, mode);
    if (mode == Activation::spiking) u = u * (T{1} - s) + p.u_rest * s;
    st.u[i] = u;
    st.b[i] = b;
    st.s[i] = s;
    st.theta[i] = theta;
  }
}

// --- value-semantics steps ------------------------------------------------

template <std::floating_point T>
NeuronState<T> lif_step(NeuronState<T> state, std::span<const T> i_t, const LifParams<T>& p,
                        Activation mode = Activation::spiking) {
  state.check();
  detail::require(i_t.size() == state.size(), "lif_step: current length must match state");
  detail::check_finite<T>(i_t, "lif_step input");
  detail::check_finite<T>(state.u, "lif_step state");
  lif_update<T>(state.view(), i_t, p, mode);
  return state;
}

template <std::floating_point T>
NeuronState<T> alif_step(NeuronState<T> state, std::span<const T> i_t, const AlifParams<T>& p,
                         Activation mode = Activation::spiking) {
  state.check();
  detail::require(i_t.size() == state.size(), "alif_step: current length must match state");
  detail::check_finite<T>(i_t, "alif_step input");
  detail::check_finite<T>(state.u, "alif_step state");
  detail::check_finite<T>(state.b, "alif_step state");
  alif_update<T>(state.view(), i_t, p, mode);
  return state;
}

template <std::floating_point T>
NeuronState<T> ltc_step(NeuronState<T> state, std::span<const T> x_t,
                        const LtcTauWeights<T>& tw, const LtcParams<T>& p = {},
                        Activation mode = Activation::spiking) {
  state.check();
  detail::require(x_t.size() == state.size(), "ltc_step: input length must match state");
  tw.check_shapes(x_t.size(), state.size());
  detail::check_finite<T>(x_t, "ltc_step input");
  detail::check_finite<T>(state.u, "ltc_step state");
  detail::check_finite<T>(state.b, "ltc_step state");
  std::vector<T> rho(state.size()), inv_tau(state.size());
  ltc_update<T>(state.view(), x_t, tw, p, mode, rho, inv_tau);
  return state;
}

template <std::floating_point T>
NeuronState<T> relu_step(NeuronState<T> state, std::span<const T> i_t, const LifParams<T>& p) {
  return lif_step<T>(std::move(state), i_t, p, Activation::relu);
}

template <std::floating_point T>
NeuronState<T> relu_step(NeuronState<T> state, std::span<const T> i_t,
                         const AlifParams<T>& p) {
  return alif_step<T>(std::move(state), i_t, p, Activation::relu);
}

template <std::floating_point T>
NeuronState<T> relu_step(NeuronState<T> state, std::span<const T> x_t,
                         const LtcTauWeights<T>& tw, const LtcParams<T>& p = {}) {
  return ltc_step<T>(std::move(state), x_t, tw, p, Activation::relu);
}

}  // namespace ltcsnn
