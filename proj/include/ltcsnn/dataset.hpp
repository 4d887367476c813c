#pragma once

// Synthetic moving-bar gesture data and on-disk dataset directories.
//
// Event dataset directory:  labels.csv ("file,label" header) + one event file
// per sample. Frame dataset directory: index.csv ("file,label" header) + a
// `<stem>.f32` / `<stem>.json` pair per sample.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/events.hpp"

namespace ltcsnn {

struct SynthSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 200;
  std::uint64_t duration_us = 500'000;
  double event_rate = 6000.0;  // bar events per second
  double noise_rate = 600.0;   // background events per second
  std::uint64_t rng_seed = 42;
  std::uint16_t sensor_w = 128;
  std::uint16_t sensor_h = 128;
  double bar_thickness_min = 4.0;
  double bar_thickness_max = 8.0;
  double direction_jitter_deg = 10.0;

  void validate() const {
    if (num_classes < 1 || samples_per_class < 1 || duration_us < 1)
      throw ConfigError("synthetic spec sizes must be positive");
    if (!(event_rate > 0.0) || !(noise_rate >= 0.0))
      throw ConfigError("synthetic event rates must be positive");
    if (!(bar_thickness_min > 0.0) || bar_thickness_max < bar_thickness_min)
      throw ConfigError("invalid bar thickness range");
  }
};

/// Sweep geometry of one synthetic sample.
struct BarSweep {
  double angle_rad = 0.0;  // direction of motion
  double thickness = 0.0;
  double half_extent = 0.0;  // bar centre travels from -half_extent to +half_extent
  double cx = 0.0, cy = 0.0;
  std::uint64_t duration_us = 0;

  /// Signed distance of point (px, py) from the bar's centre line at time t,
  /// measured along the direction of motion.
  double offset(double px, double py, std::uint64_t t) const {
    const double frac = static_cast<double>(t) / static_cast<double>(duration_us);
    const double centre = -half_extent + 2.0 * half_extent * frac;
    return (px - cx) * std::cos(angle_rad) + (py - cy) * std::sin(angle_rad) - centre;
  }
};

struct LabeledStream {
  EventStream stream;
  int label = 0;
  BarSweep sweep;
};

/// Class k is a bar moving in direction k * 360 / num_classes degrees across
/// the field. Events on the leading half of the bar are ON, on the trailing
/// half OFF. Samples are interleaved by class (0, 1, ..., K-1, 0, 1, ...).
inline std::vector<LabeledStream> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double seconds = static_cast<double>(spec.duration_us) * 1e-6;
  const double cx = spec.sensor_w / 2.0, cy = spec.sensor_h / 2.0;
  const double half_extent = std::hypot(cx, cy);

  std::vector<LabeledStream> out;
  out.reserve(spec.num_classes * spec.samples_per_class);
  for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      LabeledStream ls;
      ls.label = static_cast<int>(k);
      ls.stream.sensor_w = spec.sensor_w;
      ls.stream.sensor_h = spec.sensor_h;
      const double jitter = (2.0 * unit(rng) - 1.0) * spec.direction_jitter_deg;
      const double deg = 360.0 * static_cast<double>(k) / static_cast<double>(spec.num_classes);
      ls.sweep = {(deg + jitter) * std::numbers::pi / 180.0,
                  spec.bar_thickness_min +
                      unit(rng) * (spec.bar_thickness_max - spec.bar_thickness_min),
                  half_extent,
                  cx,
                  cy,
                  spec.duration_us};
      const double dx = std::cos(ls.sweep.angle_rad), dy = std::sin(ls.sweep.angle_rad);

      std::poisson_distribution<std::uint64_t> bar_count(spec.event_rate * seconds);
      const std::uint64_t nbar = bar_count(rng);
      auto& ev = ls.stream.events;
      for (std::uint64_t i = 0; i < nbar; ++i) {
        const auto t = static_cast<std::uint64_t>(unit(rng) * static_cast<double>(spec.duration_us));
        const double frac = static_cast<double>(t) / static_cast<double>(spec.duration_us);
        const double centre = -half_extent + 2.0 * half_extent * frac;
        const double off = (unit(rng) - 0.5) * ls.sweep.thickness;
        const double along = (2.0 * unit(rng) - 1.0) * half_extent;
        const double px = cx + dx * (centre + off) - dy * along;
        const double py = cy + dy * (centre + off) + dx * along;
        if (px < 0.0 || py < 0.0 || px >= spec.sensor_w || py >= spec.sensor_h) continue;
        ev.push_back({t, static_cast<std::uint16_t>(px), static_cast<std::uint16_t>(py),
                      static_cast<std::uint8_t>(off > 0.0 ? 1 : 0)});
      }
      if (spec.noise_rate > 0.0) {
        std::poisson_distribution<std::uint64_t> noise_count(spec.noise_rate * seconds);
        const std::uint64_t nnoise = noise_count(rng);
        for (std::uint64_t i = 0; i < nnoise; ++i) {
          const auto t = static_cast<std::uint64_t>(unit(rng) * static_cast<double>(spec.duration_us));
          const auto x = static_cast<std::uint16_t>(unit(rng) * spec.sensor_w);
          const auto y = static_cast<std::uint16_t>(unit(rng) * spec.sensor_h);
          ev.push_back({t, x, y, static_cast<std::uint8_t>(unit(rng) < 0.5 ? 0 : 1)});
        }
      }
      std::stable_sort(ev.begin(), ev.end(),
                       [](const Event& a, const Event& b) { return a.t < b.t; });
      out.push_back(std::move(ls));
    }
  }
  return out;
}

// --- dataset directories --------------------------------------------------

struct IndexEntry {
  std::string file;
  int label = -1;  // -1: unlabeled
};

namespace detail {

inline std::vector<IndexEntry> read_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<IndexEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("file,", 0) == 0) continue;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'file,label'");
    IndexEntry e;
    e.file = line.substr(0, comma);
    const std::string lab = line.substr(comma + 1);
    if (!lab.empty() && !parse_field(std::string_view(lab), e.label))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label");
    entries.push_back(e);
  }
  return entries;
}

inline void write_index(const std::filesystem::path& path, const std::vector<IndexEntry>& entries) {
  std::ostringstream out;
  out << "file,label\n";
  for (const auto& e : entries) {
    out << e.file << ',';
    if (e.label >= 0) out << e.label;
    out << '\n';
  }
  write_file(path, out.str());
}

}  // namespace detail

inline void write_event_dataset(const std::filesystem::path& dir,
                                const std::vector<LabeledStream>& samples,
                                EventFormat format = EventFormat::evt1) {
  std::filesystem::create_directories(dir);
  std::vector<IndexEntry> index;
  const char* ext = format == EventFormat::csv ? ".csv" : ".evt1";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu%s", i, ext);
    write_events(dir / name, samples[i].stream, format);
    index.push_back({name, samples[i].label});
  }
  detail::write_index(dir / "labels.csv", index);
}

struct EventSample {
  EventStream stream;
  int label = -1;
  std::string file;
};

inline std::vector<EventSample> read_event_dataset(const std::filesystem::path& dir) {
  std::vector<EventSample> out;
  for (const auto& e : detail::read_index(dir / "labels.csv"))
    out.push_back({read_events(dir / e.file), e.label, e.file});
  return out;
}

inline void write_frame_dataset(const std::filesystem::path& dir,
                                const std::vector<FrameSequence>& samples) {
  std::filesystem::create_directories(dir);
  std::vector<IndexEntry> index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::string stem = samples[i].source.empty() ? "sample_" + std::to_string(i)
                                                 : samples[i].source;
    write_frames(dir / stem, samples[i]);
    index.push_back({stem, samples[i].label.value_or(-1)});
  }
  detail::write_index(dir / "index.csv", index);
}

inline std::vector<FrameSequence> read_frame_dataset(const std::filesystem::path& dir) {
  std::vector<FrameSequence> out;
  for (const auto& e : detail::read_index(dir / "index.csv")) {
    auto f = read_frames(dir / e.file);
    if (e.label >= 0) f.label = e.label;
    out.push_back(std::move(f));
  }
  return out;
}

/// Preprocess every stream of an event dataset to T frames.
inline std::vector<FrameSequence> prepare_dataset(const std::vector<EventSample>& samples,
                                                  std::size_t frames, std::uint64_t window_us = 0,
                                                  std::size_t factor = 4) {
  std::vector<FrameSequence> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto f = preprocess(s.stream, frames, window_us, factor);
    if (s.label >= 0) f.label = s.label;
    f.source = std::filesystem::path(s.file).stem().string();
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace ltcsnn
