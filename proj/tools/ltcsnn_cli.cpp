// ltcsnn command-line tool: data generation, preprocessing, training,
// single-stream inference, benchmark sweeps and model inspection.
//
// Exit codes: 0 success, 2 configuration error, 3 data/model error,
// 4 runtime numeric error.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ltcsnn/bench.hpp"
#include "ltcsnn/dataset.hpp"
#include "ltcsnn/events.hpp"
#include "ltcsnn/model_io.hpp"
#include "ltcsnn/network.hpp"
#include "ltcsnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace ltcsnn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct GenSynthArgs {
  std::string out;
  SynthSpec spec;
  std::string format = "evt1";
};

struct PrepArgs {
  std::string events;
  std::string out;
  std::size_t frames = 20;
  std::uint64_t window_us = 0;
  std::string format;
  std::uint16_t sensor_w = 128, sensor_h = 128;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string init_model;
  std::string metrics;
  TrainConfig cfg;
  std::size_t depth = 4;
  std::size_t width = 128;
  std::string kind = "LTC";
  std::size_t classes = 0;
  double readout_tau = 4.0;
  InitConfig init;
};

struct InferArgs {
  std::string model;
  std::string events;
  std::string format;
  std::size_t frames = 20;
  std::uint64_t window_us = 0;
  std::string mode = "spiking";
  std::uint16_t sensor_w = 128, sensor_h = 128;
};

struct BenchArgs {
  std::string model;
  std::string data;
  std::vector<std::size_t> t_values{20, 35, 50, 100};
  std::vector<std::size_t> batches{16, 32, 64, 128, 256, 512, 1024};
  std::size_t warmup = 3;
  std::size_t repeats = 10;
  std::string mode = "spiking";
  double baseline = 0.91;
  std::string power_cmd;
  std::string out = "results.csv";
  bool include_prep = false;
  std::uint64_t window_us = 0;
};

std::vector<EventSample> load_event_input(const fs::path& path, const std::string& format,
                                          std::uint16_t w, std::uint16_t h) {
  if (!fs::exists(path)) throw DataError("no such file or directory: " + path.string());
  if (fs::is_directory(path)) return read_event_dataset(path);
  const auto fmt = format.empty() ? event_format_from_path(path) : event_format_from_string(format);
  return {{read_events(path, fmt, w, h), -1, path.filename().string()}};
}

int cmd_gen_synth(const GenSynthArgs& a) {
  const auto samples = generate_synthetic(a.spec);
  write_event_dataset(a.out, samples, event_format_from_string(a.format));
  std::size_t events = 0;
  for (const auto& s : samples) events += s.stream.events.size();
  std::cout << "wrote " << samples.size() << " streams (" << events << " events) to " << a.out
            << '\n';
  return 0;
}

int cmd_prep(const PrepArgs& a) {
  const auto samples = load_event_input(a.events, a.format, a.sensor_w, a.sensor_h);
  const auto frames = prepare_dataset(samples, a.frames, a.window_us);
  write_frame_dataset(a.out, frames);
  std::cout << "wrote " << frames.size() << " frame sequences (T=" << a.frames << ") to "
            << a.out << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const auto data = read_frame_dataset(a.data);
  if (data.empty()) throw DataError("no samples in " + a.data);
  Model model;
  if (!a.init_model.empty()) {
    model = load_model(a.init_model);
  } else {
    std::size_t classes = a.classes;
    if (classes == 0)
      for (const auto& f : data) classes = std::max<std::size_t>(classes, f.label.value_or(0) + 1);
    auto spec = ModelSpec::stacked(classes, a.depth, a.width, neuron_kind_from_string(a.kind),
                                   {data[0].channels, data[0].height, data[0].width});
    spec.readout_tau = a.readout_tau;
    model = random_model<float>(spec, a.init);
  }

  auto cfg = a.cfg;
  if (cfg.frames == 0) cfg.frames = data[0].frames;
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(model, data, cfg, [&](const EpochMetrics& m) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "epoch " << m.epoch << "  train_loss " << m.train_loss << "  train_acc "
              << m.train_acc << "  val_loss " << m.val_loss << "  val_acc " << m.val_acc << "  ("
              << s << " s)" << std::endl;
  });

  save_model(result.model, a.out);
  if (!a.metrics.empty()) {
    std::ofstream out(a.metrics);
    out << metrics_csv(result.history);
  }
  const auto relu = evaluate(result.model, data, Activation::relu, &result.val_indices);
  const auto spiking = evaluate(result.model, data, Activation::spiking, &result.val_indices);
  std::cout << "initial_train_loss " << result.initial_train_loss << '\n'
            << "best_epoch " << result.best_epoch << '\n'
            << "val_accuracy_relu " << relu.accuracy << '\n'
            << "val_accuracy_spiking " << spiking.accuracy << '\n'
            << "confusion_relu (rows=true, cols=predicted)\n";
  for (const auto& row : relu.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "  ") << row[j];
    std::cout << '\n';
  }
  std::cout << "saved " << a.out << '\n';
  return 0;
}

int cmd_infer(const InferArgs& a) {
  const auto model = load_model(a.model);
  const auto fmt = a.format.empty() ? event_format_from_path(a.events)
                                    : event_format_from_string(a.format);
  const auto stream = read_events(a.events, fmt, a.sensor_w, a.sensor_h);
  const auto frames = preprocess(stream, a.frames, a.window_us);
  if (frames.channels != model.spec.input_shape[0] || frames.height != model.spec.input_shape[1] ||
      frames.width != model.spec.input_shape[2])
    throw ShapeError("preprocessed frames do not match the model's input shape");
  ForwardStats stats;
  const auto scores =
      forward_sequence<float>(model, frames.view(), activation_from_string(a.mode), &stats);
  std::cout << "class " << predict<float>(scores) << "\nscores";
  for (float s : scores) std::cout << ' ' << s;
  std::cout << "\nspikes_per_layer";
  for (auto c : stats.spikes_per_layer) std::cout << ' ' << c;
  std::cout << '\n';
  return 0;
}

int cmd_bench(const BenchArgs& a) {
  SweepConfig cfg;
  cfg.t_values = a.t_values;
  cfg.batch_sizes = a.batches;
  cfg.warmup_batches = a.warmup;
  cfg.repeats = a.repeats;
  cfg.mode = activation_from_string(a.mode);
  cfg.baseline_accuracy = a.baseline;
  if (!a.power_cmd.empty()) cfg.power_cmd = a.power_cmd;
  cfg.include_prep = a.include_prep;
  cfg.window_us = a.window_us;
  cfg.validate();

  const auto model = load_model(a.model);
  BenchData data{read_event_dataset(a.data)};
  const auto rows = run_sweep(model, data, cfg, [](const SweepResult& r) {
    std::cerr << "T=" << r.frames << " batch=" << r.batch_size << " seq/s=" << r.sequences_per_sec
              << " acc=" << r.raw_accuracy << " processed=" << r.sequences_processed
              << " warmup=" << r.warmup_batches_run << '\n';
  });
  std::ofstream out(a.out, std::ios::trunc);
  if (!out) throw DataError("cannot write " + a.out);
  out << sweep_csv(rows);
  std::cout << "wrote " << rows.size() << " rows to " << a.out << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  const auto js = read_manifest(path);
  std::optional<std::uint64_t> blob_size;
  std::error_code ec;
  const auto sz = fs::file_size(blob_path_for(path), ec);
  if (!ec) blob_size = sz;
  std::cout << "format_version " << js.value("format_version", -1) << '\n';
  if (js.contains("model_spec")) std::cout << "model_spec " << js["model_spec"].dump() << '\n';
  if (js.contains("tensors"))
    for (const auto& t : js["tensors"])
      std::cout << "  " << t.value("name", "?") << ' ' << t.value("shape", nlohmann::json()).dump()
                << ' ' << t.value("dtype", "?") << " @" << t.value("byte_offset", 0) << '+'
                << t.value("byte_length", 0) << '\n';
  auto issues = validate_manifest(js, blob_size);
  if (issues.empty()) {
    try {
      load_model(path);
    } catch (const ModelIoError& e) {
      issues.push_back({e.kind, e.what()});
    }
  }
  if (issues.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& i : issues) std::cout << "error " << to_string(i.kind) << ": " << i.message << '\n';
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking recurrent LTC network toolkit"};
  app.require_subcommand(1);

  GenSynthArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate a synthetic moving-bar event dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--classes", gen.spec.num_classes, "Number of classes");
  gen_cmd->add_option("--per-class", gen.spec.samples_per_class, "Samples per class");
  gen_cmd->add_option("--duration-us", gen.spec.duration_us, "Recording length (us)");
  gen_cmd->add_option("--event-rate", gen.spec.event_rate, "Bar events per second");
  gen_cmd->add_option("--noise-rate", gen.spec.noise_rate, "Background events per second");
  gen_cmd->add_option("--seed", gen.spec.rng_seed, "RNG seed");
  gen_cmd->add_option("--format", gen.format, "Event file format")->check(CLI::IsMember({"evt1", "csv"}));

  PrepArgs prep;
  auto* prep_cmd = app.add_subcommand("prep", "Convert events to normalized frame tensors");
  prep_cmd->add_option("--events", prep.events, "Event file or dataset directory")->required();
  prep_cmd->add_option("--out", prep.out, "Output directory")->required();
  prep_cmd->add_option("--t", prep.frames, "Frames per sequence")->check(CLI::PositiveNumber);
  prep_cmd->add_option("--window-us", prep.window_us, "Window length (0 = full recording)");
  prep_cmd->add_option("--format", prep.format, "Event format for single files")->check(CLI::IsMember({"evt1", "csv"}));
  prep_cmd->add_option("--sensor-w", prep.sensor_w, "CSV sensor width");
  prep_cmd->add_option("--sensor-h", prep.sensor_h, "CSV sensor height");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train-relu", "Train the ReLU-mode network with SGD");
  train_cmd->add_option("--data", tr.data, "Frame dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Output model manifest (.json)")->required();
  train_cmd->add_option("--init-model", tr.init_model, "Start from an existing model");
  train_cmd->add_option("--metrics", tr.metrics, "Per-epoch metrics CSV");
  train_cmd->add_option("--epochs", tr.cfg.epochs, "Epochs");
  train_cmd->add_option("--lr", tr.cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--batch", tr.cfg.batch_size, "Minibatch size");
  train_cmd->add_option("--seed", tr.cfg.rng_seed, "Split/shuffle seed");
  train_cmd->add_option("--init-seed", tr.init.seed, "Weight init seed");
  train_cmd->add_option("--val-fraction", tr.cfg.val_fraction, "Validation fraction");
  train_cmd->add_option("--grad-clip", tr.cfg.grad_clip, "Gradient norm clip (0 disables)");
  train_cmd->add_option("--depth", tr.depth, "Recurrent layers");
  train_cmd->add_option("--width", tr.width, "Neurons per layer");
  train_cmd->add_option("--kind", tr.kind, "Neuron kind")->check(CLI::IsMember({"LTC", "ALIF", "LIF", "ltc", "alif", "lif"}));
  train_cmd->add_option("--classes", tr.classes, "Number of classes (default: from labels)");
  train_cmd->add_option("--readout-tau", tr.readout_tau, "Readout leak time constant");
  tr.cfg.frames = 0;

  InferArgs inf;
  auto* infer_cmd = app.add_subcommand("infer", "Classify one event stream");
  infer_cmd->add_option("--model", inf.model, "Model manifest")->required();
  infer_cmd->add_option("--events", inf.events, "Event file")->required();
  infer_cmd->add_option("--format", inf.format, "Event format")->check(CLI::IsMember({"evt1", "csv"}));
  infer_cmd->add_option("--t", inf.frames, "Frames per sequence")->check(CLI::PositiveNumber);
  infer_cmd->add_option("--window-us", inf.window_us, "Window length (0 = full recording)");
  infer_cmd->add_option("--mode", inf.mode, "spiking|relu")->check(CLI::IsMember({"spiking", "relu"}));
  infer_cmd->add_option("--sensor-w", inf.sensor_w, "CSV sensor width");
  infer_cmd->add_option("--sensor-h", inf.sensor_h, "CSV sensor height");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Throughput/accuracy sweep");
  bench_cmd->add_option("--model", bench.model, "Model manifest")->required();
  bench_cmd->add_option("--data", bench.data, "Labelled event dataset directory")->required();
  bench_cmd->add_option("--t", bench.t_values, "Comma-separated T values")->delimiter(',');
  bench_cmd->add_option("--batch", bench.batches, "Comma-separated batch sizes")->delimiter(',');
  bench_cmd->add_option("--warmup", bench.warmup, "Warm-up batches");
  bench_cmd->add_option("--repeats", bench.repeats, "Timed batches per cell");
  bench_cmd->add_option("--mode", bench.mode, "spiking|relu")->check(CLI::IsMember({"spiking", "relu"}));
  bench_cmd->add_option("--baseline-acc", bench.baseline, "Reference accuracy for normalization");
  bench_cmd->add_option("--power-cmd", bench.power_cmd, "Command printing one watts value per line");
  bench_cmd->add_option("--out", bench.out, "Results CSV");
  bench_cmd->add_flag("--include-prep", bench.include_prep, "Time preprocessing too");
  bench_cmd->add_option("--window-us", bench.window_us, "Window length (0 = full recording)");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect-model", "Print and validate a model manifest");
  inspect_cmd->add_option("--model", inspect_path, "Model manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen_cmd) return cmd_gen_synth(gen);
    if (*prep_cmd) return cmd_prep(prep);
    if (*train_cmd) return cmd_train(tr);
    if (*infer_cmd) return cmd_infer(inf);
    if (*bench_cmd) return cmd_bench(bench);
    if (*inspect_cmd) return cmd_inspect(inspect_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
