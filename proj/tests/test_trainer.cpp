#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ltcsnn/dataset.hpp"
#include "ltcsnn/trainer.hpp"

using namespace ltcsnn;

namespace {

std::vector<double> random_frames(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u01(0, 1);
  std::vector<double> f(n);
  for (auto& v : f) v = u01(rng) < 0.5 ? u01(rng) : 0.0;
  return f;
}

BasicModel<double> tiny_model(NeuronKind kind, std::uint64_t seed) {
  auto spec = ModelSpec::stacked(3, 2, 8, kind, {2, 2, 2});
  InitConfig init;
  init.seed = seed;
  init.input_gain = 3.0;
  init.hidden_gain = 3.0;
  auto m = random_model<double>(spec, init);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-0.3, 0.3);
  for (auto& l : m.layers) {
    l.lif.theta = 0.2;
    for (auto& b : l.b_in) b = ud(rng);
    for (auto& b : l.tau_weights.bias_tau_m) b = ud(rng);
    for (auto& b : l.tau_weights.bias_tau_adp) b = ud(rng);
  }
  for (auto& b : m.readout.b_out) b = ud(rng);
  return m;
}

std::vector<FrameSequence> small_dataset(std::size_t per_class, std::size_t T) {
  SynthSpec spec;
  spec.samples_per_class = per_class;
  spec.duration_us = 200'000;
  std::vector<EventSample> samples;
  for (auto& ls : generate_synthetic(spec))
    samples.push_back({std::move(ls.stream), ls.label, "s" + std::to_string(samples.size())});
  return prepare_dataset(samples, T);
}

Model small_model(std::uint64_t seed = 1) {
  InitConfig init;
  init.seed = seed;
  return random_model<float>(ModelSpec::stacked(4, 2, 16), init);
}

}  // namespace

TEST(Loss, UniformScores) {
  std::vector<float> s(4, 0.3f);
  EXPECT_NEAR(loss<float>(s, 2), std::log(4.0f), 1e-6);
  std::vector<double> two{0.0, 0.0};
  EXPECT_NEAR(loss<double>(two, 0), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(loss<double>(two, 1), 0.6931, 1e-4);
}

TEST(Loss, ConfidentCorrectClass) {
  std::vector<double> s{50.0, 0.0, -3.0};
  EXPECT_LT(loss<double>(s, 0), 1e-20);
  EXPECT_GT(loss<double>(s, 1), 49.0);
  EXPECT_THROW(loss<double>(s, 3), ConfigError);
}

TEST(Loss, GradientMatchesSoftmax) {
  std::vector<double> s{0.2, -1.0, 0.7};
  auto g = loss_gradient<double>(s, 1);
  double sum = 0;
  for (double x : g) sum += x;
  EXPECT_NEAR(sum, 0.0, 1e-15);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 3; ++i) {
    auto p = s, m = s;
    p[i] += h;
    m[i] -= h;
    EXPECT_NEAR(g[i], (loss<double>(p, 1) - loss<double>(m, 1)) / (2 * h), 1e-8);
  }
}

TEST(GradCheck, AllNeuronKinds) {
  std::mt19937_64 rng(17);
  for (auto kind : {NeuronKind::lif, NeuronKind::alif, NeuronKind::ltc}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto m = tiny_model(kind, seed);
      auto f = random_frames(rng, 5 * 8);
      auto res = grad_check<double>(m, {f, 5}, seed % 3);
      EXPECT_GT(res.checked, 50u) << to_string(kind);
      EXPECT_LE(res.max_relative_error, 1e-3) << to_string(kind) << " seed " << seed;
    }
  }
}

TEST(GradCheck, SpikingModeUnsupported) {
  auto m = tiny_model(NeuronKind::ltc, 1);
  std::vector<double> f(5 * 8, 0.5);
  EXPECT_THROW(grad_check<double>(m, {f, 5}, 0, Activation::spiking), UnsupportedModeError);
}

// A network whose hidden neurons never cross threshold has a flat loss in
// every hidden parameter.
TEST(Gradient, DeadNetworkHasZeroHiddenGradient) {
  auto m = BasicModel<double>::zeros(ModelSpec::stacked(3, 2, 8, NeuronKind::alif, {2, 2, 2}));
  std::vector<double> f(5 * 8, 0.0);
  auto g = BasicModel<double>::zeros(m.spec);
  accumulate_sample_gradient<double>(m, {f, 5}, 1, g);
  for (const auto& l : g.layers) {
    for (double x : l.w_in.storage()) ASSERT_EQ(x, 0.0);
    for (double x : l.w_rec.storage()) ASSERT_EQ(x, 0.0);
    for (double x : l.b_in) ASSERT_EQ(x, 0.0);
  }
  for (double x : g.readout.w_out.storage()) ASSERT_EQ(x, 0.0);
}

TEST(Gradient, MaskedInputHasZeroGradient) {
  std::mt19937_64 rng(2);
  for (auto kind : {NeuronKind::lif, NeuronKind::ltc}) {
    auto m = tiny_model(kind, 4);
    auto f = random_frames(rng, 5 * 8);
    for (std::size_t t = 0; t < 5; ++t) f[t * 8 + 3] = 0.0;  // pixel 3 never fires
    auto g = BasicModel<double>::zeros(m.spec);
    accumulate_sample_gradient<double>(m, {f, 5}, 0, g);
    for (double x : g.layers[0].w_in.row(3)) EXPECT_EQ(x, 0.0);
    double other = 0;
    for (double x : g.layers[0].w_in.storage()) other += std::abs(x);
    EXPECT_GT(other, 0.0) << to_string(kind);
  }
}

TEST(Gradient, TapeScoresMatchForward) {
  std::mt19937_64 rng(6);
  auto m = tiny_model(NeuronKind::ltc, 9);
  auto f = random_frames(rng, 7 * 8);
  for (auto mode : {Activation::relu, Activation::spiking}) {
    auto tape = forward_with_tape<double>(m, {f, 7}, mode);
    EXPECT_EQ(tape.scores, forward_sequence<double>(m, {f, 7}, mode));
  }
}

TEST(Split, DeterministicPartition) {
  auto [tr, va] = split_indices(100, 0.2, 5);
  EXPECT_EQ(va.size(), 20u);
  EXPECT_EQ(tr.size(), 80u);
  std::vector<bool> seen(100, false);
  for (auto i : tr) seen[i] = true;
  for (auto i : va) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
  EXPECT_EQ(std::count(seen.begin(), seen.end(), true), 100);
  EXPECT_EQ(split_indices(100, 0.2, 5).second, va);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.val_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroEpochsReturnsInput) {
  auto data = small_dataset(3, 6);
  auto m = small_model();
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.frames = 6;
  auto res = train(m, data, cfg);
  EXPECT_TRUE(res.history.empty());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(res.model.layers[i].w_in, m.layers[i].w_in);
    EXPECT_EQ(res.model.layers[i].tau_weights.w_tau_adp, m.layers[i].tau_weights.w_tau_adp);
  }
  EXPECT_EQ(res.model.readout.w_out, m.readout.w_out);
}

TEST(Train, SameSeedSameTrace) {
  auto data = small_dataset(6, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.frames = 6;
  cfg.batch_size = 4;
  auto a = train(small_model(), data, cfg), b = train(small_model(), data, cfg);
  ASSERT_EQ(a.history.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
    EXPECT_EQ(a.history[e].val_acc, b.history[e].val_acc);
  }
  EXPECT_EQ(a.model.readout.w_out, b.model.readout.w_out);
  auto csv = metrics_csv(a.history);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,val_loss,val_acc");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Train, ReducesTrainingLoss) {
  auto data = small_dataset(12, 8);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.frames = 8;
  auto res = train(small_model(3), data, cfg);
  EXPECT_LT(res.history.back().train_loss, res.initial_train_loss);
}

TEST(Train, RejectsBadData) {
  auto data = small_dataset(2, 6);
  TrainConfig cfg;
  cfg.frames = 7;
  EXPECT_THROW(train(small_model(), data, cfg), ShapeError);
  cfg.frames = 6;
  data[0].label.reset();
  EXPECT_THROW(train(small_model(), data, cfg), DataError);
}

TEST(Train, DivergenceIsReported) {
  auto data = small_dataset(2, 6);
  auto m = small_model();
  m.readout.b_out[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.frames = 6;
  cfg.epochs = 1;
  EXPECT_THROW(train(m, data, cfg), NumericError);
}

TEST(Evaluate, PerfectPredictionsAndNoSideEffects) {
  // Readout bias alone decides the class; relabel the data to match.
  auto data = small_dataset(2, 4);
  auto m = Model::zeros(ModelSpec::stacked(4, 1, 4));
  m.readout.b_out = {0.0f, 0.0f, 1.0f, 0.0f};
  for (auto& f : data) f.label = 2;
  const auto before = m.readout.b_out;
  auto r = evaluate(m, data, Activation::spiking);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.total, data.size());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_EQ(r.confusion[i][j], i == 2 && j == 2 ? data.size() : 0u);
  EXPECT_EQ(m.readout.b_out, before);
}

// Labels independent of the inputs: accuracy is Binomial(n, 1/K) / n.
TEST(Evaluate, ChanceLevelForRandomModel) {
  const std::size_t K = 4, n = 400;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<float> u01(0, 1);
  std::vector<FrameSequence> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& f = data[i];
    f.frames = 3;
    f.channels = 2;
    f.height = 4;
    f.width = 4;
    f.data.resize(3 * 32);
    for (auto& v : f.data) v = u01(rng) < 0.3f ? u01(rng) : 0.0f;
    f.label = static_cast<int>(i % K);
  }
  auto m = random_model<float>(ModelSpec::stacked(K, 2, 8, NeuronKind::ltc, {2, 4, 4}), {21});
  auto r = evaluate(m, data, Activation::relu);
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  EXPECT_NEAR(r.accuracy, 0.25, 3 * sigma);
}
