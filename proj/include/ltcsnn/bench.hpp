#pragma once

// Throughput/accuracy sweep over batch sizes and sequence lengths, with an
// optional external power sampler (any command printing one watts value per
// line).

#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ltcsnn/dataset.hpp"
#include "ltcsnn/errors.hpp"
#include "ltcsnn/events.hpp"
#include "ltcsnn/network.hpp"
#include "ltcsnn/trainer.hpp"

namespace ltcsnn {

using BenchClock = std::chrono::steady_clock;
using WarningSink = std::function<void(const std::string&)>;

inline void stderr_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

struct SweepConfig {
  std::vector<std::size_t> batch_sizes{16, 32, 64, 128, 256, 512, 1024};
  std::vector<std::size_t> t_values{20, 35, 50, 100};
  std::size_t warmup_batches = 3;
  std::size_t repeats = 10;
  Activation mode = Activation::spiking;
  double baseline_accuracy = 0.91;
  std::optional<std::string> power_cmd;
  bool include_prep = false;
  std::uint64_t window_us = 0;  // 0: full recording

  void validate() const {
    if (batch_sizes.empty() || t_values.empty()) throw ConfigError("empty sweep lists");
    for (auto b : batch_sizes)
      if (b == 0) throw ConfigError("batch sizes must be positive");
    for (auto t : t_values)
      if (t == 0) throw ConfigError("T values must be positive");
    if (repeats == 0) throw ConfigError("repeats must be positive");
    if (!(baseline_accuracy > 0.0 && baseline_accuracy <= 1.0))
      throw ConfigError("baseline accuracy must lie in (0,1]");
  }
};

struct SweepResult {
  Activation mode = Activation::spiking;
  std::size_t frames = 0;  // T
  std::size_t batch_size = 0;
  double sequences_per_sec = 0.0;
  double raw_accuracy = 0.0;
  double normalized_accuracy = 0.0;
  double wall_time_s = 0.0;
  std::optional<double> mean_watts;
  std::size_t sequences_processed = 0;  // ledger: repeats x batch_size
  std::size_t warmup_batches_run = 0;
};

struct WarmupReport {
  std::size_t batches_run = 0;
  std::optional<BenchClock::time_point> first_start;
  std::optional<BenchClock::time_point> last_end;
};

struct ThroughputResult {
  double sequences_per_sec = 0.0;
  double wall_time_s = 0.0;
  std::size_t sequences_processed = 0;
  std::size_t batches_timed = 0;
  BenchClock::time_point timed_start;
  BenchClock::time_point timed_end;
};

namespace detail {

/// Indices of batch number `r`: consecutive samples, wrapping around the
/// dataset.
inline std::vector<std::size_t> batch_indices(std::size_t r, std::size_t batch, std::size_t n) {
  std::vector<std::size_t> idx(batch);
  for (std::size_t i = 0; i < batch; ++i) idx[i] = (r * batch + i) % n;
  return idx;
}

inline Matrix<float> run_batch(const Model& model, std::span<const FrameSequence> data,
                               const std::vector<std::size_t>& idx, Activation mode) {
  std::vector<InputSequence<float>> seqs;
  seqs.reserve(idx.size());
  for (auto i : idx) seqs.push_back(data[i].view());
  return forward_batch<float>(model, seqs, mode);
}

}  // namespace detail

/// Runs `batches` untimed inferences at the measured batch size.
inline WarmupReport warmup(const Model& model, std::span<const FrameSequence> data,
                           std::size_t batch_size, std::size_t batches, Activation mode) {
  WarmupReport rep;
  if (batches == 0) return rep;
  if (batch_size > data.size())
    throw DataError("dataset has " + std::to_string(data.size()) + " samples, batch needs " +
                    std::to_string(batch_size));
  for (std::size_t r = 0; r < batches; ++r) {
    const auto t0 = BenchClock::now();
    if (!rep.first_start) rep.first_start = t0;
    detail::run_batch(model, data, detail::batch_indices(r, batch_size, data.size()), mode);
    rep.last_end = BenchClock::now();
    ++rep.batches_run;
  }
  return rep;
}

/// Times `repeats` batched inferences. Only forward passes are inside the
/// timed region unless `raw` is given, in which case each batch is also
/// preprocessed from its event streams inside the region.
inline ThroughputResult measure_throughput(const Model& model, std::span<const FrameSequence> data,
                                           std::size_t batch_size, std::size_t repeats,
                                           Activation mode,
                                           std::span<const EventSample> raw = {},
                                           std::size_t frames = 0, std::uint64_t window_us = 0) {
  if (repeats == 0) throw ConfigError("repeats must be positive");
  const std::size_t n = raw.empty() ? data.size() : raw.size();
  if (batch_size == 0 || batch_size > n)
    throw DataError("dataset has " + std::to_string(n) + " samples, batch needs " +
                    std::to_string(batch_size));
  ThroughputResult res;
  res.timed_start = BenchClock::now();
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto idx = detail::batch_indices(r, batch_size, n);
    if (raw.empty()) {
      detail::run_batch(model, data, idx, mode);
    } else {
      std::vector<FrameSequence> prepped;
      prepped.reserve(idx.size());
      for (auto i : idx) prepped.push_back(preprocess(raw[i].stream, frames, window_us));
      std::vector<std::size_t> local(idx.size());
      std::iota(local.begin(), local.end(), 0);
      detail::run_batch(model, prepped, local, mode);
    }
    res.sequences_processed += batch_size;
    ++res.batches_timed;
  }
  res.timed_end = BenchClock::now();
  res.wall_time_s = std::chrono::duration<double>(res.timed_end - res.timed_start).count();
  res.sequences_per_sec =
      static_cast<double>(res.sequences_processed) / std::max(res.wall_time_s, 1e-9);
  return res;
}

/// Child process whose stdout carries one decimal watts reading per line.
/// Readings are collected from start() until stop().
class PowerSampler {
 public:
  explicit PowerSampler(std::string command, WarningSink warn = stderr_warning)
      : command_(std::move(command)), warn_(std::move(warn)) {}
  PowerSampler(const PowerSampler&) = delete;
  PowerSampler& operator=(const PowerSampler&) = delete;
  ~PowerSampler() {
    if (pid_ > 0) terminate();
  }

  void start() {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe() failed for power sampler");
    const pid_t pid = ::fork();
    if (pid < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw std::runtime_error("fork() failed for power sampler");
    }
    if (pid == 0) {
      ::setpgid(0, 0);
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(fds[1]);
    pid_ = pid;
    read_fd_ = fds[0];
    reader_ = std::thread([this] { read_loop(); });
  }

  /// Stops the sampler and returns the mean of the readings. If nothing has
  /// arrived yet, waits up to `first_sample_timeout` for a first reading.
  std::optional<double> stop(std::chrono::milliseconds first_sample_timeout =
                                 std::chrono::milliseconds(2000)) {
    {
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, first_sample_timeout, [this] { return !samples_.empty() || eof_; });
    }
    terminate();
    std::lock_guard lock(mu_);
    if (samples_.empty()) {
      warn_("power sampler produced no readings; mean_watts omitted");
      return std::nullopt;
    }
    double sum = 0.0;
    for (double s : samples_) sum += s;
    return sum / static_cast<double>(samples_.size());
  }

  std::vector<double> samples() const {
    std::lock_guard lock(mu_);
    return samples_;
  }

 private:
  void read_loop() {
    FILE* f = ::fdopen(read_fd_, "r");
    if (!f) return;
    char* line = nullptr;
    std::size_t cap = 0;
    ssize_t len;
    while ((len = ::getline(&line, &cap, f)) != -1) {
      std::string_view sv(line, static_cast<std::size_t>(len));
      while (!sv.empty() && (sv.back() == '\n' || sv.back() == '\r' || sv.back() == ' '))
        sv.remove_suffix(1);
      while (!sv.empty() && sv.front() == ' ') sv.remove_prefix(1);
      double watts = 0.0;
      auto [p, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), watts);
      if (sv.empty() || ec != std::errc{} || p != sv.data() + sv.size() || !std::isfinite(watts)) {
        warn_("unparseable power sampler line '" + std::string(sv) + "' skipped");
        continue;
      }
      {
        std::lock_guard lock(mu_);
        if (!stopping_) samples_.push_back(watts);
      }
      cv_.notify_all();
    }
    std::free(line);
    std::fclose(f);
    {
      std::lock_guard lock(mu_);
      eof_ = true;
    }
    cv_.notify_all();
  }

  void terminate() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    if (pid_ > 0) {
      ::kill(-pid_, SIGTERM);
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
    if (reader_.joinable()) reader_.join();
  }

  std::string command_;
  WarningSink warn_;
  pid_t pid_ = -1;
  int read_fd_ = -1;
  std::thread reader_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<double> samples_;
  bool eof_ = false;
  bool stopping_ = false;
};

/// Runs `command` for `duration` and returns the mean reading.
inline std::optional<double> power_sample(const std::string& command,
                                          std::chrono::milliseconds duration,
                                          WarningSink warn = stderr_warning) {
  PowerSampler sampler(command, std::move(warn));
  sampler.start();
  std::this_thread::sleep_for(duration);
  return sampler.stop();
}

/// Evaluation inputs for a sweep: the raw labelled streams, preprocessed
/// once per T.
struct BenchData {
  std::vector<EventSample> samples;
};

using SweepProgress = std::function<void(const SweepResult&)>;

/// One row per (T, batch size), sorted by T then batch size.
inline std::vector<SweepResult> run_sweep(const Model& model, const BenchData& data,
                                          const SweepConfig& cfg,
                                          const SweepProgress& progress = {},
                                          WarningSink warn = stderr_warning) {
  cfg.validate();
  auto t_values = cfg.t_values;
  auto batches = cfg.batch_sizes;
  std::sort(t_values.begin(), t_values.end());
  std::sort(batches.begin(), batches.end());
  if (data.samples.empty()) throw DataError("benchmark dataset is empty");
  for (auto b : batches)
    if (b > data.samples.size())
      throw DataError("dataset has " + std::to_string(data.samples.size()) +
                      " samples, batch size " + std::to_string(b) + " needs more");

  std::vector<SweepResult> rows;
  for (auto frames : t_values) {
    const auto prepped = prepare_dataset(data.samples, frames, cfg.window_us);
    const double accuracy = evaluate(model, prepped, cfg.mode).accuracy;
    for (auto b : batches) {
      SweepResult row;
      row.mode = cfg.mode;
      row.frames = frames;
      row.batch_size = b;
      row.raw_accuracy = accuracy;
      row.normalized_accuracy = accuracy / cfg.baseline_accuracy;
      row.warmup_batches_run = warmup(model, prepped, b, cfg.warmup_batches, cfg.mode).batches_run;

      std::optional<PowerSampler> sampler;
      if (cfg.power_cmd) {
        sampler.emplace(*cfg.power_cmd, warn);
        sampler->start();
      }
      const auto tp = cfg.include_prep
                          ? measure_throughput(model, prepped, b, cfg.repeats, cfg.mode,
                                               data.samples, frames, cfg.window_us)
                          : measure_throughput(model, prepped, b, cfg.repeats, cfg.mode);
      if (sampler) row.mean_watts = sampler->stop();

      row.sequences_per_sec = tp.sequences_per_sec;
      row.wall_time_s = tp.wall_time_s;
      row.sequences_processed = tp.sequences_processed;
      if (progress) progress(row);
      rows.push_back(row);
    }
  }
  return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "mode,T,batch_size,sequences_per_sec,raw_accuracy,normalized_accuracy,wall_time_s,mean_watts";

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

/// Header plus one row per result; mean_watts is empty when not sampled.
/// Doubles are written in shortest round-trip form.
inline std::string sweep_csv(const std::vector<SweepResult>& rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += to_string(r.mode);
    out += ',' + std::to_string(r.frames) + ',' + std::to_string(r.batch_size) + ',' +
           detail::shortest(r.sequences_per_sec) + ',' + detail::shortest(r.raw_accuracy) + ',' +
           detail::shortest(r.normalized_accuracy) + ',' + detail::shortest(r.wall_time_s) + ',';
    if (r.mean_watts) out += detail::shortest(*r.mean_watts);
    out += '\n';
  }
  return out;
}

}  // namespace ltcsnn
