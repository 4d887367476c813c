#pragma once

// Gradient training of the ReLU-mode network: exact reverse-mode gradients
// through time, a central-difference gradient checker, a plain SGD loop and
// dataset evaluation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/events.hpp"
#include "ltcsnn/network.hpp"

namespace ltcsnn {

class UnsupportedModeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Softmax cross-entropy of `scores` against `label`.
template <std::floating_point T>
T loss(std::span<const T> scores, std::size_t label) {
  if (label >= scores.size()) throw ConfigError("label out of range");
  const T m = *std::max_element(scores.begin(), scores.end());
  T z{0};
  for (T s : scores) z += std::exp(s - m);
  return std::log(z) + m - scores[label];
}

/// d loss / d scores = softmax(scores) - onehot(label).
template <std::floating_point T>
std::vector<T> loss_gradient(std::span<const T> scores, std::size_t label) {
  const T m = *std::max_element(scores.begin(), scores.end());
  std::vector<T> g(scores.size());
  T z{0};
  for (std::size_t i = 0; i < scores.size(); ++i) z += (g[i] = std::exp(scores[i] - m));
  for (auto& x : g) x /= z;
  g[label] -= T{1};
  return g;
}

/// Forward activations of one sample, kept for the backward pass. Layer
/// quantities are stored per step with index 0 holding the initial state.
template <std::floating_point T>
struct Tape {
  std::size_t steps = 0;
  struct Layer {
    std::size_t width = 0;
    std::vector<T> u, b, s, theta;    // (steps + 1) x width
    std::vector<T> drive, rho, inv_tau;  // steps x width
    std::span<T> at(std::vector<T>& v, std::size_t t) { return {v.data() + t * width, width}; }
    std::span<const T> at(const std::vector<T>& v, std::size_t t) const {
      return {v.data() + t * width, width};
    }
  };
  std::vector<Layer> layers;
  std::vector<T> scores;
};

/// Runs one sample through the network with the engine's kernels and records
/// everything the backward pass needs.
template <std::floating_point T>
Tape<T> forward_with_tape(const BasicModel<T>& model, InputSequence<T> seq, Activation mode) {
  const std::size_t in_dim = model.spec.input_dim();
  if (seq.steps == 0 || seq.data.size() != seq.steps * in_dim)
    throw ShapeError("forward_with_tape: sequence does not match input_shape x T");
  Tape<T> tape;
  tape.steps = seq.steps;
  for (const auto& l : model.layers) {
    typename Tape<T>::Layer tl;
    const std::size_t n = tl.width = l.width();
    tl.u.assign((seq.steps + 1) * n, T{0});
    tl.b.assign((seq.steps + 1) * n, T{0});
    tl.s.assign((seq.steps + 1) * n, T{0});
    tl.theta.assign((seq.steps + 1) * n, T{0});
    std::fill_n(tl.theta.begin(), n, l.initial_theta());
    tl.drive.assign(seq.steps * n, T{0});
    tl.rho.assign(seq.steps * n, T{0});
    tl.inv_tau.assign(seq.steps * n, T{0});
    tape.layers.push_back(std::move(tl));
  }
  const std::size_t C = model.spec.num_classes;
  std::vector<T> v(C, T{0}), sum(C, T{0});
  const T readout_tau = static_cast<T>(model.spec.readout_tau);

  std::vector<LayerScratch<T>> scratch;
  for (const auto& l : model.layers) scratch.emplace_back(l.width());
  for (std::size_t t = 1; t <= seq.steps; ++t) {
    std::span<const T> a = seq.data.subspan((t - 1) * in_dim, in_dim);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      auto& tl = tape.layers[l];
      for (auto* vec : {&tl.u, &tl.b, &tl.s, &tl.theta}) {
        auto prev = tl.at(*vec, t - 1);
        std::copy(prev.begin(), prev.end(), tl.at(*vec, t).begin());
      }
      StateView<T> st{tl.at(tl.u, t), tl.at(tl.b, t), tl.at(tl.s, t), tl.at(tl.theta, t)};
      layer_update<T>(model.layers[l], st, a, scratch[l], mode);
      std::copy(scratch[l].drive.begin(), scratch[l].drive.end(), tl.at(tl.drive, t - 1).begin());
      if (model.layers[l].kind == NeuronKind::ltc) {
        std::copy(scratch[l].rho.begin(), scratch[l].rho.end(), tl.at(tl.rho, t - 1).begin());
        std::copy(scratch[l].inv_tau.begin(), scratch[l].inv_tau.end(),
                  tl.at(tl.inv_tau, t - 1).begin());
      }
      a = st.s;
    }
    readout_step<T>(model.readout, readout_tau, a, v, sum);
  }
  tape.scores.resize(C);
  for (std::size_t j = 0; j < C; ++j) tape.scores[j] = sum[j] / static_cast<T>(seq.steps);
  return tape;
}

/// Accumulates d loss / d parameters into `grad` (same shapes as `model`)
/// for one recorded ReLU-mode sample.
template <std::floating_point T>
void backward(const BasicModel<T>& model, const Tape<T>& tape, InputSequence<T> seq,
              std::span<const T> grad_scores, BasicModel<T>& grad) {
  const std::size_t depth = model.layers.size();
  const std::size_t steps = tape.steps;
  const std::size_t in_dim = model.spec.input_dim();
  const std::size_t C = model.spec.num_classes;
  const T r = T{1} / static_cast<T>(model.spec.readout_tau);

  std::vector<std::vector<T>> g_u(depth), g_b(depth), g_s(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t n = model.layers[l].width();
    g_u[l].assign(n, T{0});
    g_b[l].assign(n, T{0});
    g_s[l].assign(n, T{0});
  }
  std::vector<T> g_v(C, T{0}), g_proj(C);

  for (std::size_t t = steps; t >= 1; --t) {
    // readout: v_t = v_{t-1}(1 - r) + r (s W_out + b_out); scores = mean_t v_t
    for (std::size_t j = 0; j < C; ++j) {
      g_v[j] = g_v[j] * (T{1} - r) + grad_scores[j] / static_cast<T>(steps);
      g_proj[j] = r * g_v[j];
    }
    {
      const auto& top = tape.layers.back();
      auto s_top = top.at(top.s, t);
      detail::accumulate_outer<T>(s_top, g_proj, grad.readout.w_out);
      for (std::size_t j = 0; j < C; ++j) grad.readout.b_out[j] += g_proj[j];
      detail::accumulate_matvec_t<T>(g_proj, model.readout.w_out, g_s.back());
    }

    for (std::size_t li = depth; li-- > 0;) {
      const auto& L = model.layers[li];
      auto& G = grad.layers[li];
      const auto& tl = tape.layers[li];
      const std::size_t n = L.width();
      auto u_prev = tl.at(tl.u, t - 1), b_prev = tl.at(tl.b, t - 1), s_prev = tl.at(tl.s, t - 1);
      auto theta_prev = tl.at(tl.theta, t - 1);
      auto u = tl.at(tl.u, t), theta = tl.at(tl.theta, t);
      auto c = tl.at(tl.drive, t - 1);

      std::vector<T> gu(n), gb(n, T{0}), g_uprev(n, T{0}), g_bprev(n, T{0}), g_sprev(n, T{0}),
          g_c(n, T{0});
      for (std::size_t i = 0; i < n; ++i) {
        const T m = u[i] > theta[i] ? T{1} : T{0};
        gu[i] = g_u[li][i] + g_s[li][i] * m;
        gb[i] = g_b[li][i];
        if (L.kind != NeuronKind::lif) {
          const T beta = L.kind == NeuronKind::alif ? L.alif.beta : L.ltc.beta;
          gb[i] -= beta * g_s[li][i] * m;
        }
      }

      switch (L.kind) {
        case NeuronKind::lif: {
          const T k = T{1} / L.lif.tau_m;
          for (std::size_t i = 0; i < n; ++i) {
            g_uprev[i] = gu[i] * (T{1} - k);
            g_c[i] = gu[i] * k * L.lif.r_m;
          }
          break;
        }
        case NeuronKind::alif: {
          const auto& p = L.alif;
          for (std::size_t i = 0; i < n; ++i) {
            g_uprev[i] = p.alpha * gu[i];
            g_bprev[i] = p.rho * gb[i] - p.beta * s_prev[i] * gu[i];
            g_sprev[i] += (T{1} - p.rho) * gb[i] - theta_prev[i] * gu[i];
            g_c[i] = (T{1} - p.alpha) * p.r_m * gu[i];
          }
          break;
        }
        case NeuronKind::ltc: {
          auto rho = tl.at(tl.rho, t - 1), k = tl.at(tl.inv_tau, t - 1);
          std::vector<T> g_zm(n), g_zr(n);
          for (std::size_t i = 0; i < n; ++i) {
            g_uprev[i] = gu[i] * (T{1} - k[i]);
            g_c[i] = gu[i] * k[i];
            g_zm[i] = gu[i] * (c[i] - u_prev[i]) * k[i] * (T{1} - k[i]);
            g_bprev[i] = gb[i] * rho[i];
            g_sprev[i] += gb[i] * (T{1} - rho[i]);
            g_zr[i] = gb[i] * (b_prev[i] - s_prev[i]) * rho[i] * (T{1} - rho[i]);
          }
          auto& tw = L.tau_weights;
          auto& gtw = G.tau_weights;
          detail::accumulate_outer<T>(c, g_zm, gtw.w_tau_m, 0);
          detail::accumulate_outer<T>(u_prev, g_zm, gtw.w_tau_m, n);
          detail::accumulate_outer<T>(c, g_zr, gtw.w_tau_adp, 0);
          detail::accumulate_outer<T>(b_prev, g_zr, gtw.w_tau_adp, n);
          for (std::size_t i = 0; i < n; ++i) {
            gtw.bias_tau_m[i] += g_zm[i];
            gtw.bias_tau_adp[i] += g_zr[i];
          }
          detail::accumulate_matvec_t<T>(g_zm, tw.w_tau_m, std::span<T>(g_c), 0);
          detail::accumulate_matvec_t<T>(g_zm, tw.w_tau_m, std::span<T>(g_uprev), n);
          detail::accumulate_matvec_t<T>(g_zr, tw.w_tau_adp, std::span<T>(g_c), 0);
          detail::accumulate_matvec_t<T>(g_zr, tw.w_tau_adp, std::span<T>(g_bprev), n);
          break;
        }
      }

      // drive = a W_in + s_prev W_rec + b_in
      std::span<const T> a =
          li == 0 ? seq.data.subspan((t - 1) * in_dim, in_dim)
                  : tape.layers[li - 1].at(tape.layers[li - 1].s, t);
      detail::accumulate_outer<T>(a, g_c, G.w_in);
      detail::accumulate_outer<T>(s_prev, g_c, G.w_rec);
      for (std::size_t i = 0; i < n; ++i) G.b_in[i] += g_c[i];
      detail::accumulate_matvec_t<T>(g_c, L.w_rec, std::span<T>(g_sprev));
      if (li > 0) detail::accumulate_matvec_t<T>(g_c, L.w_in, std::span<T>(g_s[li - 1]));

      g_u[li] = std::move(g_uprev);
      g_b[li] = std::move(g_bprev);
      g_s[li] = std::move(g_sprev);
    }
  }
}

/// Loss and accumulated gradient of one labelled sample (ReLU mode).
template <std::floating_point T>
T accumulate_sample_gradient(const BasicModel<T>& model, InputSequence<T> seq, std::size_t label,
                             BasicModel<T>& grad, std::vector<T>* scores_out = nullptr) {
  auto tape = forward_with_tape<T>(model, seq, Activation::relu);
  const T l = loss<T>(tape.scores, label);
  const auto gs = loss_gradient<T>(tape.scores, label);
  backward<T>(model, tape, seq, gs, grad);
  if (scores_out) *scores_out = tape.scores;
  return l;
}

namespace detail {

/// Visits every parameter tensor of a model (and a second, same-shaped one).
template <std::floating_point T, typename F>
void for_each_tensor(BasicModel<T>& a, BasicModel<T>& b, F&& f) {
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    auto& la = a.layers[i];
    auto& lb = b.layers[i];
    f(la.w_in.storage(), lb.w_in.storage());
    f(la.w_rec.storage(), lb.w_rec.storage());
    f(la.b_in, lb.b_in);
    if (la.kind == NeuronKind::ltc) {
      f(la.tau_weights.w_tau_m.storage(), lb.tau_weights.w_tau_m.storage());
      f(la.tau_weights.w_tau_adp.storage(), lb.tau_weights.w_tau_adp.storage());
      f(la.tau_weights.bias_tau_m, lb.tau_weights.bias_tau_m);
      f(la.tau_weights.bias_tau_adp, lb.tau_weights.bias_tau_adp);
    }
  }
  f(a.readout.w_out.storage(), b.readout.w_out.storage());
  f(a.readout.b_out, b.readout.b_out);
}

/// Which neurons sit above threshold at every step: the ReLU kink pattern.
template <std::floating_point T>
std::vector<bool> relu_pattern(const BasicModel<T>& model, InputSequence<T> seq) {
  const auto tape = forward_with_tape<T>(model, seq, Activation::relu);
  std::vector<bool> out;
  for (const auto& tl : tape.layers)
    for (std::size_t i = tl.width; i < tl.u.size(); ++i) out.push_back(tl.u[i] > tl.theta[i]);
  return out;
}

}  // namespace detail

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kink = 0;
};

struct GradCheckConfig {
  double step = 1e-3;
  std::size_t max_params = 4096;  // sampled uniformly when the model has more
  double abs_floor = 1e-6;        // gradients below this in magnitude compare absolutely
  std::uint64_t seed = 7;
};

/// Compares backward() against central finite differences of forward_sequence.
/// Parameters whose perturbation flips any ReLU on/off are skipped.
template <std::floating_point T>
GradCheckResult grad_check(const BasicModel<T>& model, InputSequence<T> seq, std::size_t label,
                           Activation mode = Activation::relu, const GradCheckConfig& cfg = {}) {
  if (mode != Activation::relu)
    throw UnsupportedModeError("grad_check supports relu mode only");
  auto analytic = BasicModel<T>::zeros(model.spec);
  accumulate_sample_gradient<T>(model, seq, label, analytic);
  const auto base_pattern = detail::relu_pattern<T>(model, seq);

  BasicModel<T> probe = model;
  std::vector<std::pair<std::vector<T>*, std::vector<T>*>> tensors;
  detail::for_each_tensor<T>(probe, analytic,
                             [&](std::vector<T>& p, std::vector<T>& g) { tensors.push_back({&p, &g}); });
  std::vector<std::pair<std::size_t, std::size_t>> params;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti)
    for (std::size_t j = 0; j < tensors[ti].first->size(); ++j) params.push_back({ti, j});
  if (params.size() > cfg.max_params) {
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(params.begin(), params.end(), rng);
    params.resize(cfg.max_params);
  }

  GradCheckResult res;
  const T h = static_cast<T>(cfg.step);
  auto eval = [&] {
    auto s = forward_sequence<T>(probe, seq, Activation::relu);
    return loss<T>(s, label);
  };
  for (auto [ti, j] : params) {
    T& w = (*tensors[ti].first)[j];
    const T orig = w;
    w = orig + h;
    const T lp = eval();
    const bool kink_p = detail::relu_pattern<T>(probe, seq) != base_pattern;
    w = orig - h;
    const T lm = eval();
    const bool kink_m = detail::relu_pattern<T>(probe, seq) != base_pattern;
    w = orig;
    if (kink_p || kink_m) {
      ++res.skipped_at_kink;
      continue;
    }
    const double numeric = static_cast<double>((lp - lm) / (T{2} * h));
    const double exact = static_cast<double>((*tensors[ti].second)[j]);
    const double scale = std::max({std::abs(numeric), std::abs(exact), cfg.abs_floor});
    res.max_relative_error = std::max(res.max_relative_error, std::abs(numeric - exact) / scale);
    ++res.checked;
  }
  return res;
}

// --- training ---------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 12;
  std::size_t batch_size = 16;
  std::uint64_t rng_seed = 1;
  std::size_t frames = 20;  // expected T of every sample; 0 accepts any
  double val_fraction = 0.2;
  double grad_clip = 5.0;  // global-norm clip per minibatch; 0 disables

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
      throw ConfigError("val_fraction must lie in (0,1)");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> history;
  double initial_train_loss = 0.0;
  std::size_t best_epoch = 0;  // 0: the untrained model was best
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

namespace detail {

inline std::size_t checked_label(const FrameSequence& f, std::size_t num_classes) {
  if (!f.label || *f.label < 0 || static_cast<std::size_t>(*f.label) >= num_classes)
    throw DataError("sample '" + f.source + "' has no valid label");
  return static_cast<std::size_t>(*f.label);
}

inline void check_sample(const Model& model, const FrameSequence& f) {
  const auto& s = model.spec.input_shape;
  if (f.channels != s[0] || f.height != s[1] || f.width != s[2])
    throw ShapeError("sample '" + f.source + "' frame shape does not match the model input");
}

}  // namespace detail

/// Accuracy, mean loss and confusion matrix. Never modifies the model.
inline EvalResult evaluate(const Model& model, std::span<const FrameSequence> data,
                           Activation mode, const std::vector<std::size_t>* subset = nullptr,
                           std::size_t batch = 32) {
  const std::size_t K = model.spec.num_classes;
  EvalResult res;
  res.confusion.assign(K, std::vector<std::size_t>(K, 0));
  std::vector<std::size_t> idx;
  if (subset) {
    idx = *subset;
  } else {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), 0);
  }
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    const std::size_t end = std::min(idx.size(), start + batch);
    std::vector<InputSequence<float>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      detail::check_sample(model, data[idx[i]]);
      seqs.push_back(data[idx[i]].view());
    }
    const auto scores = forward_batch<float>(model, seqs, mode);
    for (std::size_t i = start; i < end; ++i) {
      const auto truth = detail::checked_label(data[idx[i]], K);
      const auto row = scores.row(i - start);
      const auto pred = predict<float>(row);
      ++res.confusion[truth][pred];
      correct += pred == truth;
      loss_sum += loss<float>(row, truth);
    }
  }
  res.total = idx.size();
  res.accuracy = res.total ? static_cast<double>(correct) / static_cast<double>(res.total) : 0.0;
  res.mean_loss = res.total ? loss_sum / static_cast<double>(res.total) : 0.0;
  return res;
}

/// Deterministic shuffled split; returns (train, val) indices.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, n > 1 ? 1 : 0, n > 1 ? n - 1 : 0);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {train, val};
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Minibatch SGD in ReLU mode. Returns the weights with the best validation
/// accuracy (lower validation loss breaks ties).
inline TrainResult train(const Model& initial, std::span<const FrameSequence> data,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  initial.check();
  const std::size_t K = initial.spec.num_classes;
  for (const auto& f : data) {
    detail::check_sample(initial, f);
    detail::checked_label(f, K);
    if (cfg.frames && f.frames != cfg.frames)
      throw ShapeError("sample '" + f.source + "' has T=" + std::to_string(f.frames) +
                       ", training expects T=" + std::to_string(cfg.frames));
  }

  TrainResult res;
  std::tie(res.train_indices, res.val_indices) = split_indices(data.size(), cfg.val_fraction,
                                                               cfg.rng_seed);
  res.model = initial;
  if (data.empty()) return res;

  const auto initial_train = evaluate(initial, data, Activation::relu, &res.train_indices);
  res.initial_train_loss = initial_train.mean_loss;
  if (cfg.epochs == 0) return res;

  const auto initial_val = evaluate(initial, data, Activation::relu, &res.val_indices);
  double best_acc = initial_val.accuracy, best_loss = initial_val.mean_loss;

  Model model = initial;
  Model grad = Model::zeros(initial.spec);
  std::mt19937_64 rng(cfg.rng_seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order = res.train_indices;
  std::vector<float> scores;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grad = Model::zeros(initial.spec);
      for (std::size_t i = start; i < end; ++i) {
        const auto& f = data[order[i]];
        const auto label = static_cast<std::size_t>(*f.label);
        const float l = accumulate_sample_gradient<float>(model, f.view(), label, grad, &scores);
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "non-finite training loss at epoch " << epoch << ", sample '" << f.source
              << "' (batch starting at " << start << ")";
          throw TrainingDiverged(msg.str());
        }
        loss_sum += l;
        correct += predict<float>(scores) == label;
      }
      const double count = static_cast<double>(end - start);
      double norm_sq = 0.0;
      detail::for_each_tensor<float>(grad, grad, [&](std::vector<float>& g, std::vector<float>&) {
        for (float x : g) norm_sq += static_cast<double>(x) * x;
      });
      const double norm = std::sqrt(norm_sq) / count;
      if (!std::isfinite(norm)) throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch));
      double scale = cfg.learning_rate / count;
      if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) scale *= cfg.grad_clip / norm;
      const auto step = static_cast<float>(scale);
      detail::for_each_tensor<float>(model, grad, [&](std::vector<float>& p, std::vector<float>& g) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= step * g[j];
      });
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(order.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    const auto val = evaluate(model, data, Activation::relu, &res.val_indices);
    m.val_loss = val.mean_loss;
    m.val_acc = val.accuracy;
    res.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (val.accuracy > best_acc || (val.accuracy == best_acc && val.mean_loss < best_loss)) {
      best_acc = val.accuracy;
      best_loss = val.mean_loss;
      res.model = model;
      res.best_epoch = epoch;
    }
  }
  return res;
}

/// "epoch,train_loss,train_acc,val_loss,val_acc" plus one row per epoch.
inline std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream out;
  out.precision(6);
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& m : history)
    out << m.epoch << ',' << m.train_loss << ',' << m.train_acc << ',' << m.val_loss << ','
        << m.val_acc << '\n';
  return out.str();
}

}  // namespace ltcsnn
