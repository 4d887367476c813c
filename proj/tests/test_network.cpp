#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ltcsnn/network.hpp"
#include "oracles.hpp"

using namespace ltcsnn;

namespace {

ModelSpec small_spec(NeuronKind kind, std::size_t depth = 2, std::size_t width = 6,
                     std::size_t classes = 3) {
  return ModelSpec::stacked(classes, depth, width, kind, {2, 3, 3});
}

std::vector<float> random_frames(std::mt19937_64& rng, std::size_t n, float density = 0.4f) {
  std::uniform_real_distribution<float> u01(0, 1);
  std::vector<float> f(n);
  for (auto& v : f) v = u01(rng) < density ? u01(rng) : 0.0f;
  return f;
}

}  // namespace

TEST(ModelSpec, DefaultsAndValidation) {
  auto spec = ModelSpec::stacked(4);
  EXPECT_EQ(spec.layers.size(), 4u);
  EXPECT_EQ(spec.input_dim(), 2048u);
  EXPECT_EQ(spec.layers[0].in_dim, 2048u);
  EXPECT_EQ(spec.layers[3].width, 128u);
  EXPECT_EQ(spec.layers[3].kind, NeuronKind::ltc);
  EXPECT_NO_THROW(spec.validate());
  spec.num_classes = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
  auto bad = ModelSpec::stacked(4);
  bad.layers[1].in_dim = 7;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(neuron_kind_from_string("IZH"), ConfigError);
}

TEST(InitState, ZerosAndShapes) {
  auto m = Model::zeros(small_spec(NeuronKind::ltc));
  auto one = init_state(m, 1);
  for (const auto& l : one.layers) {
    EXPECT_EQ(l.u, std::vector<float>(6, 0.0f));
    EXPECT_EQ(l.s, std::vector<float>(6, 0.0f));
    EXPECT_EQ(l.b, std::vector<float>(6, 0.0f));
  }
  auto eight = init_state(m, 8);
  EXPECT_EQ(eight.layers[0].u.size(), 8u * 6);
  EXPECT_EQ(eight.readout_v.rows(), 8u);
  for (const auto& l : eight.layers) EXPECT_EQ(l.theta, std::vector<float>(8 * 6, 0.1f));
  auto alif = Model::zeros(small_spec(NeuronKind::alif));
  EXPECT_EQ(init_state(alif, 2).layers[1].theta, std::vector<float>(12, 0.1f));
  EXPECT_THROW(init_state(m, 0), ConfigError);
}

TEST(LayerForward, ZeroWeightsAreQuiet) {
  auto l = LayerWeights<float>::zeros({4, 3, NeuronKind::lif});
  std::vector<float> a{1, 1, 1, 1};
  auto [st, s] = layer_forward<float>(l, NeuronState<float>::resting(3, 1.0f), a);
  EXPECT_EQ(s, std::vector<float>(3, 0.0f));
}

TEST(LayerForward, SingleLifNeuron) {
  auto l = LayerWeights<float>::zeros({1, 1, NeuronKind::lif});
  l.w_in(0, 0) = 1.0f;
  l.lif = {2.0f, 1.0f, 0.5f, 0.0f};
  std::vector<float> a{2.0f};
  LayerScratch<float> ws(1);
  auto st = NeuronState<float>::resting(1, 0.5f);
  layer_update<float>(l, st.view(), a, ws, Activation::spiking);
  EXPECT_EQ(ws.drive[0], 2.0f);
  EXPECT_EQ(st.s[0], 1.0f);
  EXPECT_EQ(st.u[0], 0.0f);
  auto pre = NeuronState<float>::resting(1, 0.5f);
  auto [r, out] = layer_forward<float>(l, pre, a, Activation::relu);
  EXPECT_EQ(r.u[0], 1.0f);
  EXPECT_EQ(out[0], 0.5f);
}

TEST(LayerForward, ShapeErrors) {
  auto l = LayerWeights<float>::zeros({4, 3, NeuronKind::ltc});
  std::vector<float> a{1, 1};
  EXPECT_THROW(layer_forward<float>(l, NeuronState<float>::resting(3), a), ShapeError);
  std::vector<float> a4(4, 0.0f);
  EXPECT_THROW(layer_forward<float>(l, NeuronState<float>::resting(2), a4), ShapeError);
}

TEST(Readout, Limits) {
  ReadoutWeights<float> ro{Matrix<float>(2, 2), {0.0f, 0.0f}};
  std::vector<float> v(2, 0.0f), sum(2, 0.0f), s{0.0f, 0.0f};
  for (int t = 0; t < 10; ++t) readout_step<float>(ro, 4.0f, s, v, sum);
  EXPECT_EQ(v, (std::vector<float>{0, 0}));

  ro.w_out(0, 0) = 3.0f;
  ro.w_out(1, 1) = -2.0f;
  ro.b_out = {0.5f, 0.25f};
  std::vector<float> s1{1.0f, 1.0f};
  std::fill(v.begin(), v.end(), 7.0f);
  readout_step<float>(ro, 1.0f, s1, v, sum);
  EXPECT_EQ(v, (std::vector<float>{3.5f, -1.75f}));

  std::fill(v.begin(), v.end(), 0.0f);
  for (int t = 0; t < 400; ++t) readout_step<float>(ro, 4.0f, s1, v, sum);
  EXPECT_NEAR(v[0], 3.5f, 1e-5);
  EXPECT_NEAR(v[1], -1.75f, 1e-5);
}

TEST(Forward, ZeroFramesGiveBiasScores) {
  auto m = random_model<float>(small_spec(NeuronKind::ltc), {3});
  std::fill(m.readout.b_out.begin(), m.readout.b_out.end(), 0.0f);
  m.readout.b_out[1] = 0.3f;
  std::vector<float> zeros(5 * 18, 0.0f);
  ForwardStats stats;
  auto scores = forward_sequence<float>(m, {zeros, 5}, Activation::spiking, &stats);
  EXPECT_EQ(stats.total(), 0u);
  // v_t = 0.3 (1 - 0.75^t); mean over 5 steps
  double expect = 0;
  for (int t = 1; t <= 5; ++t) expect += 0.3 * (1 - std::pow(0.75, t));
  EXPECT_NEAR(scores[1], expect / 5, 1e-6);
  EXPECT_EQ(scores[0], 0.0f);
  EXPECT_EQ(predict<float>(scores), 1u);
}

// Class 0 reads only the left half of the frame, class 1 only the right half.
TEST(Forward, HandBuiltSelectivity) {
  ModelSpec spec = ModelSpec::stacked(2, 1, 2, NeuronKind::lif, {1, 2, 4});
  auto m = Model::zeros(spec);
  auto& l = m.layers[0];
  l.lif = {1.0f, 1.0f, 0.5f, 0.0f};
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 4; ++x) l.w_in(y * 4 + x, x < 2 ? 0 : 1) = 1.0f;
  m.readout.w_out(0, 0) = 1.0f;
  m.readout.w_out(1, 1) = 1.0f;
  std::vector<float> left(3 * 8, 0.0f), right(3 * 8, 0.0f);
  for (std::size_t t = 0; t < 3; ++t) {
    left[t * 8 + 0] = 1.0f;
    right[t * 8 + 7] = 1.0f;
  }
  for (auto mode : {Activation::spiking, Activation::relu}) {
    EXPECT_EQ(predict<float>(forward_sequence<float>(m, {left, 3}, mode)), 0u);
    EXPECT_EQ(predict<float>(forward_sequence<float>(m, {right, 3}, mode)), 1u);
  }
}

TEST(Forward, StatelessAcrossCalls) {
  std::mt19937_64 rng(1);
  auto m = random_model<float>(small_spec(NeuronKind::alif), {4});
  auto f = random_frames(rng, 7 * 18);
  for (auto mode : {Activation::spiking, Activation::relu}) {
    auto a = forward_sequence<float>(m, {f, 7}, mode);
    auto b = forward_sequence<float>(m, {f, 7}, mode);
    EXPECT_EQ(a, b);
  }
}

TEST(Forward, ShapeErrors) {
  auto m = Model::zeros(small_spec(NeuronKind::ltc));
  std::vector<float> f(4 * 18, 0.0f), g(5 * 18, 0.0f), bad(17, 0.0f);
  std::vector<InputSequence<float>> ragged{{f, 4}, {g, 5}};
  EXPECT_THROW(forward_batch<float>(m, ragged, Activation::spiking), ShapeError);
  EXPECT_THROW(forward_sequence<float>(m, {bad, 1}, Activation::spiking), ShapeError);
  std::vector<InputSequence<float>> none;
  EXPECT_THROW(forward_batch<float>(m, none, Activation::spiking), ShapeError);
}

TEST(Forward, NonFiniteRaises) {
  auto m = Model::zeros(small_spec(NeuronKind::lif, 1));
  m.layers[0].w_in(0, 0) = std::numeric_limits<float>::infinity();
  std::vector<float> f(18, 1.0f);
  EXPECT_THROW(forward_sequence<float>(m, {f, 1}, Activation::relu), NumericError);
}

TEST(Forward, BatchOfCopiesGivesIdenticalRows) {
  std::mt19937_64 rng(2);
  auto m = random_model<float>(small_spec(NeuronKind::ltc), {5});
  auto f = random_frames(rng, 6 * 18);
  std::vector<InputSequence<float>> batch(5, {f, 6});
  auto scores = forward_batch<float>(m, batch, Activation::spiking);
  auto one = forward_sequence<float>(m, {f, 6}, Activation::spiking);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(scores(r, c), one[c]);
}

TEST(Forward, BatchMatchesLoop) {
  std::mt19937_64 rng(8);
  for (auto kind : {NeuronKind::lif, NeuronKind::alif, NeuronKind::ltc}) {
    auto m = random_model<float>(small_spec(kind, 3, 10), {9});
    std::vector<std::vector<float>> frames;
    std::vector<InputSequence<float>> batch;
    for (int i = 0; i < 8; ++i) frames.push_back(random_frames(rng, 6 * 18));
    for (const auto& f : frames) batch.push_back({f, 6});
    for (auto mode : {Activation::spiking, Activation::relu}) {
      auto scores = forward_batch<float>(m, batch, mode);
      for (std::size_t r = 0; r < batch.size(); ++r) {
        auto one = forward_sequence<float>(m, batch[r], mode);
        for (std::size_t c = 0; c < one.size(); ++c) EXPECT_NEAR(scores(r, c), one[c], 1e-5);
      }
    }
  }
}

TEST(Forward, ReluModeMatchesDenseReference) {
  std::mt19937_64 rng(12);
  for (auto kind : {NeuronKind::lif, NeuronKind::alif, NeuronKind::ltc}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto m = random_model<float>(small_spec(kind, 3, 7), {static_cast<std::uint64_t>(trial)});
      auto f = random_frames(rng, 8 * 18);
      auto got = forward_sequence<float>(m, {f, 8}, Activation::relu);
      auto want = oracle::relu_network(m, f, 8);
      for (std::size_t c = 0; c < got.size(); ++c) EXPECT_NEAR(got[c], want[c], 1e-5);
    }
  }
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(predict<float>(std::vector<float>{0.1f, 0.9f}), 1u);
  EXPECT_EQ(predict<float>(std::vector<float>{0.5f, 0.5f}), 0u);
  EXPECT_EQ(predict<float>(std::vector<float>(7, 2.0f)), 0u);
  EXPECT_THROW(predict<float>(std::vector<float>{}), ShapeError);
}

TEST(Predict, ShiftInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> ud(-1, 1);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> s(5);
    for (auto& v : s) v = std::round(ud(rng) * 8) / 8;  // exact shifts, ties included
    auto shifted = s;
    for (auto& v : shifted) v += 0.5f;
    EXPECT_EQ(predict<float>(s), predict<float>(shifted));
  }
}

TEST(RandomModel, DeterministicAndChecked) {
  auto spec = small_spec(NeuronKind::ltc);
  auto a = random_model<float>(spec, {7}), b = random_model<float>(spec, {7});
  EXPECT_EQ(a.layers[1].w_rec, b.layers[1].w_rec);
  EXPECT_EQ(a.layers[0].tau_weights.w_tau_m, b.layers[0].tau_weights.w_tau_m);
  EXPECT_NO_THROW(a.check());
  EXPECT_EQ(a.layers[0].tau_weights.w_tau_m.rows(), 12u);
  auto c = random_model<float>(spec, {8});
  EXPECT_NE(a.layers[0].w_in, c.layers[0].w_in);
}
