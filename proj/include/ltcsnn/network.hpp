#pragma once

// Stacked recurrent layers of LIF/ALIF/LTC neurons followed by a
// non-spiking leaky-integrator readout, evaluated over batches of
// frame sequences.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/matrix.hpp"
#include "ltcsnn/neuron.hpp"

namespace ltcsnn {

enum class NeuronKind { lif, alif, ltc };

inline const char* to_string(NeuronKind k) {
  switch (k) {
    case NeuronKind::lif: return "LIF";
    case NeuronKind::alif: return "ALIF";
    case NeuronKind::ltc: return "LTC";
  }
  return "?";
}

inline NeuronKind neuron_kind_from_string(const std::string& s) {
  if (s == "LIF" || s == "lif") return NeuronKind::lif;
  if (s == "ALIF" || s == "alif") return NeuronKind::alif;
  if (s == "LTC" || s == "ltc") return NeuronKind::ltc;
  throw ConfigError("unknown neuron kind '" + s + "'");
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t width = 0;
  NeuronKind kind = NeuronKind::ltc;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
  std::array<std::size_t, 3> input_shape{2, 32, 32};  // channels, height, width
  std::vector<LayerSpec> layers;
  std::size_t num_classes = 4;
  double readout_tau = 4.0;

  std::size_t input_dim() const noexcept {
    return input_shape[0] * input_shape[1] * input_shape[2];
  }

  /// `depth` recurrent layers of `width` neurons on a (2, 32, 32) input.
  static ModelSpec stacked(std::size_t num_classes, std::size_t depth = 4,
                           std::size_t width = 128, NeuronKind kind = NeuronKind::ltc,
                           std::array<std::size_t, 3> input_shape = {2, 32, 32}) {
    ModelSpec spec;
    spec.input_shape = input_shape;
    spec.num_classes = num_classes;
    std::size_t in = spec.input_dim();
    for (std::size_t i = 0; i < depth; ++i) {
      spec.layers.push_back({in, width, kind});
      in = width;
    }
    return spec;
  }

  void validate() const {
    if (layers.empty()) throw ConfigError("model needs at least one layer");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(readout_tau >= 1.0)) throw ConfigError("readout_tau must be >= 1");
    if (input_dim() == 0) throw ConfigError("input_shape must be non-empty");
    std::size_t in = input_dim();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].width == 0 || layers[i].in_dim == 0)
        throw ConfigError("layer " + std::to_string(i) + " has zero size");
      if (layers[i].in_dim != in)
        throw ConfigError("layer " + std::to_string(i) + " in_dim does not match its input");
      in = layers[i].width;
    }
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

template <std::floating_point T>
struct LayerWeights {
  NeuronKind kind = NeuronKind::ltc;
  Matrix<T> w_in;   // in_dim x width
  Matrix<T> w_rec;  // width x width
  std::vector<T> b_in;
  LtcTauWeights<T> tau_weights;  // LTC only; empty otherwise
  LifParams<T> lif;
  AlifParams<T> alif;
  LtcParams<T> ltc;

  std::size_t in_dim() const noexcept { return w_in.rows(); }
  std::size_t width() const noexcept { return w_in.cols(); }

  static LayerWeights zeros(const LayerSpec& ls) {
    LayerWeights lw;
    lw.kind = ls.kind;
    lw.w_in = Matrix<T>(ls.in_dim, ls.width);
    lw.w_rec = Matrix<T>(ls.width, ls.width);
    lw.b_in.assign(ls.width, T{0});
    if (ls.kind == NeuronKind::ltc) lw.tau_weights = LtcTauWeights<T>::zeros(ls.width, ls.width);
    lw.alif = AlifParams<T>::from_time_constants(T{20}, T{200});
    return lw;
  }

  /// Threshold a resting neuron of this layer starts with.
  T initial_theta() const noexcept {
    switch (kind) {
      case NeuronKind::lif: return lif.theta;
      case NeuronKind::alif: return alif.b0;
      case NeuronKind::ltc: return ltc.b0;
    }
    return T{0};
  }

  void check(const LayerSpec& ls) const {
    detail::require(kind == ls.kind, "layer neuron kind does not match its LayerSpec");
    detail::require(w_in.rows() == ls.in_dim && w_in.cols() == ls.width,
                    "w_in must be in_dim x width");
    detail::require(w_rec.rows() == ls.width && w_rec.cols() == ls.width,
                    "w_rec must be width x width");
    detail::require(b_in.size() == ls.width, "b_in must have width entries");
    if (kind == NeuronKind::ltc) tau_weights.check_shapes(ls.width, ls.width);
    if (kind == NeuronKind::lif) lif.validate();
    if (kind == NeuronKind::alif) alif.validate();
  }

  template <std::floating_point U>
  LayerWeights<U> cast() const {
    LayerWeights<U> o;
    o.kind = kind;
    o.w_in = w_in.template cast<U>();
    o.w_rec = w_rec.template cast<U>();
    o.b_in.assign(b_in.begin(), b_in.end());
    o.tau_weights.w_tau_m = tau_weights.w_tau_m.template cast<U>();
    o.tau_weights.w_tau_adp = tau_weights.w_tau_adp.template cast<U>();
    o.tau_weights.bias_tau_m.assign(tau_weights.bias_tau_m.begin(), tau_weights.bias_tau_m.end());
    o.tau_weights.bias_tau_adp.assign(tau_weights.bias_tau_adp.begin(),
                                      tau_weights.bias_tau_adp.end());
    o.lif = {U(lif.tau_m), U(lif.r_m), U(lif.theta), U(lif.u_reset)};
    o.alif = {U(alif.alpha), U(alif.rho), U(alif.r_m), U(alif.b0),
              U(alif.beta),  U(alif.dt),  U(alif.u_reset)};
    o.ltc = {U(ltc.b0), U(ltc.beta), U(ltc.u_rest)};
    return o;
  }
};

template <std::floating_point T>
struct ReadoutWeights {
  Matrix<T> w_out;  // width_last x num_classes
  std::vector<T> b_out;
};

template <std::floating_point T>
struct BasicModel {
  ModelSpec spec;
  std::vector<LayerWeights<T>> layers;
  ReadoutWeights<T> readout;

  static BasicModel zeros(const ModelSpec& spec) {
    spec.validate();
    BasicModel m;
    m.spec = spec;
    for (const auto& ls : spec.layers) m.layers.push_back(LayerWeights<T>::zeros(ls));
    m.readout.w_out = Matrix<T>(spec.layers.back().width, spec.num_classes);
    m.readout.b_out.assign(spec.num_classes, T{0});
    return m;
  }

  void check() const {
    spec.validate();
    detail::require(layers.size() == spec.layers.size(), "layer count does not match the ModelSpec");
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].check(spec.layers[i]);
    detail::require(readout.w_out.rows() == spec.layers.back().width &&
                        readout.w_out.cols() == spec.num_classes,
                    "w_out must be width_last x num_classes");
    detail::require(readout.b_out.size() == spec.num_classes, "b_out must have num_classes entries");
  }

  template <std::floating_point U>
  BasicModel<U> cast() const {
    BasicModel<U> o;
    o.spec = spec;
    for (const auto& l : layers) o.layers.push_back(l.template cast<U>());
    o.readout.w_out = readout.w_out.template cast<U>();
    o.readout.b_out.assign(readout.b_out.begin(), readout.b_out.end());
    return o;
  }
};

using Model = BasicModel<float>;

struct InitConfig {
  std::uint64_t seed = 1;
  double input_gain = 20.0;  // first layer; frames are sparse and in [0,1]
  double hidden_gain = 20.0;
  double recurrent_gain = 0.5;
  double tau_gain = 0.5;
  double readout_gain = 1.0;
};

/// Uniform fan-in scaled initialization, U(-g/sqrt(fan_in), g/sqrt(fan_in)).
/// Biases start at zero so that both time-constant sigmoids begin at 0.5.
template <std::floating_point T>
BasicModel<T> random_model(const ModelSpec& spec, const InitConfig& cfg = {}) {
  auto m = BasicModel<T>::zeros(spec);
  std::mt19937_64 rng(cfg.seed);
  auto fill = [&rng](Matrix<T>& w, double gain) {
    const double a = gain / std::sqrt(static_cast<double>(w.rows()));
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto& x : w.flat()) x = static_cast<T>(dist(rng));
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& l = m.layers[i];
    fill(l.w_in, i == 0 ? cfg.input_gain : cfg.hidden_gain);
    fill(l.w_rec, cfg.recurrent_gain);
    if (l.kind == NeuronKind::ltc) {
      fill(l.tau_weights.w_tau_m, cfg.tau_gain);
      fill(l.tau_weights.w_tau_adp, cfg.tau_gain);
    }
  }
  fill(m.readout.w_out, cfg.readout_gain);
  return m;
}

// --- state ----------------------------------------------------------------

/// Per-batch network state. Layer states hold `batch` rows of `width`
/// neurons, flattened row-major.
template <std::floating_point T>
struct NetworkState {
  std::size_t batch = 0;
  std::vector<NeuronState<T>> layers;
  Matrix<T> readout_v;    // batch x num_classes
  Matrix<T> readout_sum;  // batch x num_classes
  std::size_t steps = 0;

  StateView<T> row_view(std::size_t layer, std::size_t row, std::size_t width) {
    auto& st = layers[layer];
    const std::size_t off = row * width;
    return {std::span<T>(st.u).subspan(off, width), std::span<T>(st.b).subspan(off, width),
            std::span<T>(st.s).subspan(off, width), std::span<T>(st.theta).subspan(off, width)};
  }
};

template <std::floating_point T>
NetworkState<T> init_state(const BasicModel<T>& model, std::size_t batch) {
  if (batch == 0) throw ConfigError("batch must be >= 1");
  NetworkState<T> ns;
  ns.batch = batch;
  for (const auto& l : model.layers)
    ns.layers.push_back(NeuronState<T>::resting(batch * l.width(), l.initial_theta()));
  ns.readout_v = Matrix<T>(batch, model.spec.num_classes);
  ns.readout_sum = Matrix<T>(batch, model.spec.num_classes);
  return ns;
}

/// Scratch buffers for one layer step of one sample.
template <std::floating_point T>
struct LayerScratch {
  std::vector<T> drive;
  std::vector<T> rho;
  std::vector<T> inv_tau;

  explicit LayerScratch(std::size_t width = 0) : drive(width), rho(width), inv_tau(width) {}
};

/// drive = a_t W_in + s_prev W_rec + b_in
template <std::floating_point T>
void synaptic_drive(const LayerWeights<T>& layer, std::span<const T> a_t,
                    std::span<const T> s_prev, std::span<T> drive) {
  std::copy(layer.b_in.begin(), layer.b_in.end(), drive.begin());
  detail::accumulate_vecmat<T>(a_t, layer.w_in, drive);
  detail::accumulate_vecmat<T>(s_prev, layer.w_rec, drive);
}

/// One timestep of one layer for one sample, in place. The drive is the
/// neuron's input current (LIF/ALIF) or its x_t (LTC).
template <std::floating_point T>
void layer_update(const LayerWeights<T>& layer, StateView<T> st, std::span<const T> a_t,
                  LayerScratch<T>& ws, Activation mode) {
  synaptic_drive<T>(layer, a_t, st.s, ws.drive);
  switch (layer.kind) {
    case NeuronKind::lif: lif_update<T>(st, ws.drive, layer.lif, mode); break;
    case NeuronKind::alif: alif_update<T>(st, ws.drive, layer.alif, mode); break;
    case NeuronKind::ltc:
      ltc_update<T>(st, ws.drive, layer.tau_weights, layer.ltc, mode, ws.rho, ws.inv_tau);
      break;
  }
}

/// Value-semantics single-sample layer step: returns the new state and the
/// layer's output s_t.
template <std::floating_point T>
std::pair<NeuronState<T>, std::vector<T>> layer_forward(const LayerWeights<T>& layer,
                                                        NeuronState<T> state,
                                                        std::span<const T> a_t,
                                                        Activation mode = Activation::spiking) {
  state.check();
  detail::require(state.size() == layer.width(), "layer_forward: state width mismatch");
  detail::require(a_t.size() == layer.in_dim(), "layer_forward: input size mismatch");
  LayerScratch<T> ws(layer.width());
  layer_update<T>(layer, state.view(), a_t, ws, mode);
  auto s = state.s;
  return {std::move(state), std::move(s)};
}

/// v <- v (1 - 1/tau) + (1/tau)(s W_out + b_out); sum += v.
template <std::floating_point T>
void readout_step(const ReadoutWeights<T>& ro, T readout_tau, std::span<const T> s_last,
                  std::span<T> v, std::span<T> sum) {
  detail::require(s_last.size() == ro.w_out.rows(), "readout_step: input size mismatch");
  detail::require(v.size() == ro.w_out.cols() && sum.size() == v.size(),
                  "readout_step: state size mismatch");
  const T r = T{1} / readout_tau;
  std::vector<T> proj(ro.b_out.begin(), ro.b_out.end());
  detail::accumulate_vecmat<T>(s_last, ro.w_out, proj);
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = v[j] * (T{1} - r) + r * proj[j];
    sum[j] += v[j];
  }
}

// --- sequence inference ---------------------------------------------------

/// A sequence of `steps` flattened input frames laid out contiguously.
template <std::floating_point T>
struct InputSequence {
  std::span<const T> data;
  std::size_t steps = 0;
};

struct ForwardStats {
  std::vector<std::uint64_t> spikes_per_layer;  // nonzero outputs in relu mode
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : spikes_per_layer) n += c;
    return n;
  }
};

/// Runs every sequence of the batch through the network from a fresh state
/// and returns time-averaged readout potentials (batch x num_classes).
template <std::floating_point T>
Matrix<T> forward_batch(const BasicModel<T>& model, std::span<const InputSequence<T>> batch,
                        Activation mode, ForwardStats* stats = nullptr) {
  if (batch.empty()) throw ShapeError("forward_batch: empty batch");
  const std::size_t steps = batch[0].steps;
  const std::size_t in_dim = model.spec.input_dim();
  if (steps == 0) throw ShapeError("forward_batch: sequences need at least one step");
  for (const auto& seq : batch) {
    if (seq.steps != steps) throw ShapeError("forward_batch: ragged batch (mixed T)");
    if (seq.data.size() != steps * in_dim)
      throw ShapeError("forward_batch: sequence size does not match input_shape x T");
  }

  const std::size_t depth = model.layers.size();
  auto ns = init_state(model, batch.size());
  std::vector<LayerScratch<T>> scratch;
  for (const auto& l : model.layers) scratch.emplace_back(l.width());
  if (stats) stats->spikes_per_layer.assign(depth, 0);
  const T readout_tau = static_cast<T>(model.spec.readout_tau);

  // Layer-outer, row-inner: one layer's weights stay cache-resident while the
  // whole batch passes through it. Per-row arithmetic is unchanged.
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t l = 0; l < depth; ++l) {
      const auto& layer = model.layers[l];
      for (std::size_t row = 0; row < batch.size(); ++row) {
        std::span<const T> a =
            l == 0 ? batch[row].data.subspan(t * in_dim, in_dim)
                   : std::span<const T>(ns.row_view(l - 1, row, model.layers[l - 1].width()).s);
        auto st = ns.row_view(l, row, layer.width());
        layer_update<T>(layer, st, a, scratch[l], mode);
        if (!detail::all_finite<T>(st.u))
          throw NumericError("non-finite membrane potential in layer " + std::to_string(l) +
                             " at step " + std::to_string(t));
        if (stats)
          for (T s : st.s) stats->spikes_per_layer[l] += s != T{0};
      }
    }
    for (std::size_t row = 0; row < batch.size(); ++row)
      readout_step<T>(model.readout, readout_tau,
                      std::span<const T>(ns.row_view(depth - 1, row, model.layers.back().width()).s),
                      ns.readout_v.row(row), ns.readout_sum.row(row));
  }

  Matrix<T> scores(batch.size(), model.spec.num_classes);
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores.storage()[i] = ns.readout_sum.storage()[i] / static_cast<T>(steps);
  if (!detail::all_finite<T>(scores.flat())) throw NumericError("non-finite class scores");
  return scores;
}

template <std::floating_point T>
std::vector<T> forward_sequence(const BasicModel<T>& model, InputSequence<T> seq,
                                Activation mode, ForwardStats* stats = nullptr) {
  auto scores = forward_batch<T>(model, std::span<const InputSequence<T>>(&seq, 1), mode, stats);
  return scores.storage();
}

/// Argmax with ties resolved to the lowest index.
template <std::floating_point T>
std::size_t predict(std::span<const T> scores) {
  if (scores.empty()) throw ShapeError("predict: empty scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace ltcsnn
