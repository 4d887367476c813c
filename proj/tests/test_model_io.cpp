#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "ltcsnn/model_io.hpp"

using namespace ltcsnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("ltcsnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

Model mixed_model() {
  ModelSpec spec;
  spec.input_shape = {2, 4, 4};
  spec.num_classes = 3;
  spec.readout_tau = 2.5;
  spec.layers = {{32, 5, NeuronKind::ltc}, {5, 4, NeuronKind::alif}, {4, 6, NeuronKind::lif}};
  auto m = random_model<float>(spec, {11});
  m.layers[1].alif = AlifParams<float>::from_time_constants(15.0f, 150.0f);
  m.layers[2].lif = {3.0f, 1.5f, 0.7f, -0.1f};
  m.layers[0].ltc.beta = 1.5f;
  m.layers[0].tau_weights.bias_tau_m[2] = 0.25f;
  m.readout.b_out = {0.1f, -0.2f, 0.3f};
  return m;
}

bool has_kind(const std::vector<ManifestIssue>& issues, ModelIoErrorKind k) {
  for (const auto& i : issues)
    if (i.kind == k) return true;
  return false;
}

}  // namespace

TEST(ModelIo, RoundTripIsBitwise) {
  auto dir = scratch_dir("model_rt");
  auto m = mixed_model();
  save_model(m, dir / "m.json");
  EXPECT_TRUE(fs::exists(dir / "m.bin"));
  auto back = load_model(dir / "m.json");
  EXPECT_EQ(back.spec, m.spec);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    EXPECT_EQ(back.layers[i].w_in, m.layers[i].w_in);
    EXPECT_EQ(back.layers[i].w_rec, m.layers[i].w_rec);
    EXPECT_EQ(back.layers[i].b_in, m.layers[i].b_in);
    EXPECT_EQ(back.layers[i].tau_weights.w_tau_m, m.layers[i].tau_weights.w_tau_m);
    EXPECT_EQ(back.layers[i].tau_weights.w_tau_adp, m.layers[i].tau_weights.w_tau_adp);
    EXPECT_EQ(back.layers[i].tau_weights.bias_tau_m, m.layers[i].tau_weights.bias_tau_m);
  }
  EXPECT_EQ(back.layers[1].alif.alpha, m.layers[1].alif.alpha);
  EXPECT_EQ(back.layers[2].lif.u_reset, -0.1f);
  EXPECT_EQ(back.layers[0].ltc.beta, 1.5f);
  EXPECT_EQ(back.readout.w_out, m.readout.w_out);
  EXPECT_EQ(back.readout.b_out, m.readout.b_out);

  save_model(back, dir / "again.json");
  EXPECT_EQ(slurp(dir / "m.bin"), slurp(dir / "again.bin"));
}

TEST(ModelIo, SavesAreDeterministic) {
  auto dir = scratch_dir("model_det");
  auto m = mixed_model();
  save_model(m, dir / "a.json");
  save_model(m, dir / "b.json");
  EXPECT_EQ(slurp(dir / "a.json"), slurp(dir / "b.json"));
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
}

TEST(ModelIo, CanonicalTensorNames) {
  auto dir = scratch_dir("model_names");
  save_model(mixed_model(), dir / "m.json");
  auto js = read_manifest(dir / "m.json");
  std::vector<std::string> names;
  for (const auto& t : js["tensors"]) names.push_back(t["name"]);
  const std::vector<std::string> want{
      "layer0.w_in", "layer0.w_rec",   "layer0.b_in",   "layer0.w_tau_m", "layer0.w_tau_adp",
      "layer0.b_tau_m", "layer0.b_tau_adp", "layer1.w_in", "layer1.w_rec", "layer1.b_in",
      "layer2.w_in", "layer2.w_rec",   "layer2.b_in",   "readout.w_out", "readout.b_out"};
  EXPECT_EQ(names, want);
  EXPECT_EQ(js["format_version"], 1);
  EXPECT_EQ(js["tensors"][3]["shape"], (std::vector<int>{10, 5}));
  EXPECT_EQ(js["checksum"].get<std::uint32_t>(), crc32_of(slurp(dir / "m.bin")));
  EXPECT_TRUE(validate_manifest(js, fs::file_size(dir / "m.bin")).empty());
}

TEST(ModelIo, DefaultModelTensorCount) {
  auto spec = ModelSpec::stacked(4);
  EXPECT_EQ(expected_tensors(spec).size(), 4u * 7 + 2);
  EXPECT_EQ(expected_tensors(ModelSpec::stacked(4, 4, 16, NeuronKind::alif)).size(), 4u * 3 + 2);
}

TEST(ModelIo, OverlapNamesBothTensors) {
  auto dir = scratch_dir("model_overlap");
  save_model(mixed_model(), dir / "m.json");
  auto js = read_manifest(dir / "m.json");
  js["tensors"][1]["byte_offset"] = js["tensors"][1]["byte_offset"].get<std::uint64_t>() - 4;
  auto issues = validate_manifest(js);
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].kind, ModelIoErrorKind::overlapping_tensors);
  EXPECT_NE(issues[0].message.find("layer0.w_in"), std::string::npos);
  EXPECT_NE(issues[0].message.find("layer0.w_rec"), std::string::npos);
}

TEST(ModelIo, ManifestProblemsAreReported) {
  auto dir = scratch_dir("model_bad");
  save_model(mixed_model(), dir / "m.json");
  const auto good = read_manifest(dir / "m.json");

  auto js = good;
  js["tensors"][2]["dtype"] = "f64";
  EXPECT_TRUE(has_kind(validate_manifest(js), ModelIoErrorKind::unsupported_dtype));

  js = good;
  js["tensors"][0]["name"] = "layer0.w_bogus";
  auto issues = validate_manifest(js);
  EXPECT_TRUE(has_kind(issues, ModelIoErrorKind::unknown_tensor));
  EXPECT_TRUE(has_kind(issues, ModelIoErrorKind::missing_tensor));

  js = good;
  js["tensors"][0]["shape"] = {5, 32};
  EXPECT_TRUE(has_kind(validate_manifest(js), ModelIoErrorKind::shape_mismatch));

  js = good;
  js["format_version"] = 2;
  EXPECT_TRUE(has_kind(validate_manifest(js), ModelIoErrorKind::version_mismatch));

  js = good;
  js.erase("checksum");
  EXPECT_TRUE(has_kind(validate_manifest(js), ModelIoErrorKind::malformed));

  EXPECT_TRUE(has_kind(validate_manifest(good, 100), ModelIoErrorKind::out_of_bounds));
}

TEST(ModelIo, LoadRejectsBadFiles) {
  auto dir = scratch_dir("model_load_bad");
  save_model(mixed_model(), dir / "m.json");
  auto js = read_manifest(dir / "m.json");

  auto expect_kind = [&](ModelIoErrorKind k) {
    try {
      load_model(dir / "m.json");
      ADD_FAILURE() << "load succeeded";
    } catch (const ModelIoError& e) {
      EXPECT_EQ(e.kind, k) << e.what();
    }
  };

  auto v2 = js;
  v2["format_version"] = 2;
  spit(dir / "m.json", v2.dump());
  expect_kind(ModelIoErrorKind::version_mismatch);

  auto shape = js;
  shape["model_spec"]["layers"][0]["width"] = 6;
  spit(dir / "m.json", shape.dump());
  EXPECT_THROW(load_model(dir / "m.json"), ModelIoError);

  spit(dir / "m.json", js.dump());
  EXPECT_NO_THROW(load_model(dir / "m.json"));
  const auto blob = slurp(dir / "m.bin");
  spit(dir / "m.bin", blob.substr(0, blob.size() - 4));
  expect_kind(ModelIoErrorKind::out_of_bounds);

  fs::remove(dir / "m.bin");
  expect_kind(ModelIoErrorKind::io);
  spit(dir / "m.json", "{not json");
  expect_kind(ModelIoErrorKind::malformed);
}

// Every single-bit flip of the blob must be caught by the checksum.
TEST(ModelIo, BitFlipsAreRejected) {
  auto dir = scratch_dir("model_flip");
  save_model(mixed_model(), dir / "m.json");
  const auto blob = slurp(dir / "m.bin");
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pos(0, blob.size() - 1);
  std::uniform_int_distribution<int> bit(0, 7);
  for (int trial = 0; trial < 200; ++trial) {
    auto bad = blob;
    bad[pos(rng)] ^= static_cast<char>(1 << bit(rng));
    spit(dir / "m.bin", bad);
    try {
      load_model(dir / "m.json");
      FAIL() << "corrupted blob accepted";
    } catch (const ModelIoError& e) {
      ASSERT_EQ(e.kind, ModelIoErrorKind::checksum_mismatch);
    }
  }
}

TEST(ModelIo, Crc32KnownValue) {
  // Standard CRC-32 check value.
  EXPECT_EQ(crc32_of("123456789"), 0xCBF43926u);
  EXPECT_EQ(crc32_of(""), 0u);
}
