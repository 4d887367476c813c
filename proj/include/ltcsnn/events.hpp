#pragma once

// DVS event streams: CSV/EVT1 parsing and serialization, accumulation into
// fixed-interval count frames, sum-pool downsampling and normalization.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ltcsnn/errors.hpp"
#include "ltcsnn/network.hpp"

namespace ltcsnn {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are not supported");

struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t polarity = 0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct EventStream {
  std::uint16_t sensor_w = 128;
  std::uint16_t sensor_h = 128;
  std::vector<Event> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Malformed record; `index` is the zero-based record number.
class EventParseError : public DataError {
 public:
  EventParseError(std::size_t index, const std::string& what)
      : DataError("record " + std::to_string(index) + ": " + what), index(index) {}
  std::size_t index;
};

/// Coordinate or polarity outside the sensor's range.
class EventBoundsError : public DataError {
 public:
  EventBoundsError(std::size_t index, const std::string& what)
      : DataError("record " + std::to_string(index) + ": " + what), index(index) {}
  std::size_t index;
};

/// Timestamp smaller than its predecessor's.
class EventOrderError : public DataError {
 public:
  EventOrderError(std::size_t index, const std::string& what)
      : DataError("record " + std::to_string(index) + ": " + what), index(index) {}
  std::size_t index;
};

enum class EventFormat { csv, evt1 };

inline EventFormat event_format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".csv" || ext == ".txt") return EventFormat::csv;
  if (ext == ".evt1" || ext == ".bin") return EventFormat::evt1;
  throw ConfigError("cannot infer event format from extension '" + ext + "'");
}

inline EventFormat event_format_from_string(const std::string& s) {
  if (s == "csv") return EventFormat::csv;
  if (s == "evt1") return EventFormat::evt1;
  throw ConfigError("unknown event format '" + s + "' (expected csv|evt1)");
}

inline constexpr std::array<char, 8> kEvt1Magic{'E', 'V', 'T', '1', '\0', '\0', '\0', '\0'};
inline constexpr std::size_t kEvt1HeaderBytes = 16;
inline constexpr std::size_t kEvt1RecordBytes = 14;

namespace detail {

inline void validate_event(const Event& e, std::size_t index, std::uint16_t w, std::uint16_t h,
                           const Event* prev) {
  if (e.x >= w)
    throw EventBoundsError(index, "x=" + std::to_string(e.x) + " outside sensor width " +
                                      std::to_string(w));
  if (e.y >= h)
    throw EventBoundsError(index, "y=" + std::to_string(e.y) + " outside sensor height " +
                                      std::to_string(h));
  if (e.polarity > 1)
    throw EventBoundsError(index, "polarity must be 0 or 1");
  if (prev && e.t < prev->t)
    throw EventOrderError(index, "timestamp " + std::to_string(e.t) + " precedes " +
                                     std::to_string(prev->t));
}

template <typename U>
bool parse_field(std::string_view field, U& out) {
  if (field.empty()) return false;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc{} && p == field.data() + field.size();
}

template <typename U>
void put_le(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get_le(const char* p) {
  U v;
  std::memcpy(&v, p, sizeof(U));
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace detail

/// One "t_us,x,y,polarity" record per LF-terminated line, no header.
inline EventStream parse_events_csv(std::string_view text, std::uint16_t sensor_w = 128,
                                    std::uint16_t sensor_h = 128) {
  EventStream stream{sensor_w, sensor_h, {}};
  std::size_t pos = 0;
  std::size_t index = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;

    std::array<std::string_view, 4> fields;
    std::size_t n = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (n == fields.size()) throw EventParseError(index, "expected 4 fields");
        fields[n++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (n != 4) throw EventParseError(index, "expected 4 fields");

    Event e;
    unsigned x = 0, y = 0, p = 0;
    if (!detail::parse_field(fields[0], e.t) || !detail::parse_field(fields[1], x) ||
        !detail::parse_field(fields[2], y) || !detail::parse_field(fields[3], p))
      throw EventParseError(index, "non-numeric field in '" + std::string(line) + "'");
    if (x > 0xFFFF || y > 0xFFFF || p > 0xFF)
      throw EventBoundsError(index, "field out of range in '" + std::string(line) + "'");
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.polarity = static_cast<std::uint8_t>(p);
    detail::validate_event(e, index, sensor_w, sensor_h,
                           stream.events.empty() ? nullptr : &stream.events.back());
    stream.events.push_back(e);
    ++index;
  }
  return stream;
}

inline EventStream parse_events_evt1(std::string_view bytes) {
  if (bytes.size() < kEvt1HeaderBytes) throw EventParseError(0, "truncated EVT1 header");
  if (std::memcmp(bytes.data(), kEvt1Magic.data(), kEvt1Magic.size()) != 0)
    throw EventParseError(0, "bad EVT1 magic");
  EventStream stream;
  stream.sensor_w = detail::get_le<std::uint16_t>(bytes.data() + 8);
  stream.sensor_h = detail::get_le<std::uint16_t>(bytes.data() + 10);
  const auto count = detail::get_le<std::uint32_t>(bytes.data() + 12);
  const std::size_t body = bytes.size() - kEvt1HeaderBytes;
  if (body != static_cast<std::size_t>(count) * kEvt1RecordBytes) {
    const std::size_t complete = body / kEvt1RecordBytes;
    throw EventParseError(std::min<std::size_t>(complete, count),
                          "EVT1 body holds " + std::to_string(body) + " bytes, header declares " +
                              std::to_string(count) + " records");
  }
  stream.events.reserve(count);
  const char* p = bytes.data() + kEvt1HeaderBytes;
  for (std::size_t i = 0; i < count; ++i, p += kEvt1RecordBytes) {
    Event e;
    e.t = detail::get_le<std::uint64_t>(p);
    e.x = detail::get_le<std::uint16_t>(p + 8);
    e.y = detail::get_le<std::uint16_t>(p + 10);
    e.polarity = static_cast<std::uint8_t>(p[12]);
    detail::validate_event(e, i, stream.sensor_w, stream.sensor_h,
                           stream.events.empty() ? nullptr : &stream.events.back());
    stream.events.push_back(e);
  }
  return stream;
}

inline EventStream parse_events(std::string_view bytes, EventFormat format,
                                std::uint16_t sensor_w = 128, std::uint16_t sensor_h = 128) {
  return format == EventFormat::csv ? parse_events_csv(bytes, sensor_w, sensor_h)
                                    : parse_events_evt1(bytes);
}

inline EventStream read_events(const std::filesystem::path& path, EventFormat format,
                               std::uint16_t sensor_w = 128, std::uint16_t sensor_h = 128) {
  return parse_events(detail::read_file(path), format, sensor_w, sensor_h);
}

inline EventStream read_events(const std::filesystem::path& path) {
  return read_events(path, event_format_from_path(path));
}

inline std::string serialize_events_csv(const EventStream& stream) {
  std::string out;
  out.reserve(stream.events.size() * 20);
  for (const auto& e : stream.events) {
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += std::to_string(unsigned{e.polarity});
    out += '\n';
  }
  return out;
}

inline std::string serialize_events_evt1(const EventStream& stream) {
  if (stream.events.size() > 0xFFFFFFFFu) throw DataError("too many events for EVT1");
  std::string out;
  out.reserve(kEvt1HeaderBytes + stream.events.size() * kEvt1RecordBytes);
  out.append(kEvt1Magic.data(), kEvt1Magic.size());
  detail::put_le<std::uint16_t>(out, stream.sensor_w);
  detail::put_le<std::uint16_t>(out, stream.sensor_h);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.events.size()));
  for (const auto& e : stream.events) {
    detail::put_le<std::uint64_t>(out, e.t);
    detail::put_le<std::uint16_t>(out, e.x);
    detail::put_le<std::uint16_t>(out, e.y);
    detail::put_le<std::uint8_t>(out, e.polarity);
    detail::put_le<std::uint8_t>(out, 0);
  }
  return out;
}

inline std::string serialize_events(const EventStream& stream, EventFormat format) {
  return format == EventFormat::csv ? serialize_events_csv(stream)
                                    : serialize_events_evt1(stream);
}

inline void write_events(const std::filesystem::path& path, const EventStream& stream,
                         EventFormat format) {
  detail::write_file(path, serialize_events(stream, format));
}

// --- frames ---------------------------------------------------------------

/// Integer event counts, frames x channels x height x width, row-major.
struct EventCounts {
  std::size_t frames = 0, channels = 0, height = 0, width = 0;
  double dt_us = 0.0;
  std::vector<std::uint32_t> data;

  EventCounts() = default;
  EventCounts(std::size_t t, std::size_t c, std::size_t h, std::size_t w, double dt)
      : frames(t), channels(c), height(h), width(w), dt_us(dt), data(t * c * h * w, 0) {}

  std::uint32_t& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
    return data[((t * channels + c) * height + y) * width + x];
  }
  std::uint32_t at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return data[((t * channels + c) * height + y) * width + x];
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : data) s += v;
    return s;
  }
};

/// Network input: frames x channels x height x width floats.
struct FrameSequence {
  std::size_t frames = 0, channels = 0, height = 0, width = 0;
  double dt_us = 0.0;
  std::optional<int> label;
  std::string source;
  std::vector<float> data;

  std::size_t frame_size() const noexcept { return channels * height * width; }
  InputSequence<float> view() const { return {data, frames}; }
};

/// Buckets events into `frames` equal intervals of a window of `window_us`
/// microseconds starting at the first event. An event exactly at the window
/// end goes to the last frame; later events are dropped.
inline EventCounts accumulate_frames(const EventStream& stream, std::size_t frames,
                                     std::uint64_t window_us) {
  if (frames == 0) throw ConfigError("frame count must be >= 1");
  if (window_us < frames) throw ConfigError("window_us must be >= frame count");
  EventCounts out(frames, 2, stream.sensor_h, stream.sensor_w,
                  static_cast<double>(window_us) / static_cast<double>(frames));
  if (stream.events.empty()) return out;
  const std::uint64_t t0 = stream.events.front().t;
  for (const auto& e : stream.events) {
    const std::uint64_t rel = e.t - t0;
    if (rel > window_us) continue;
    std::size_t k = rel == window_us
                        ? frames - 1
                        : static_cast<std::size_t>(static_cast<unsigned __int128>(rel) * frames /
                                                   window_us);
    out.at(k, e.polarity, e.y, e.x) += 1;
  }
  return out;
}

/// Window spanning the whole recording (at least one microsecond per frame).
inline std::uint64_t full_window_us(const EventStream& stream, std::size_t frames) {
  std::uint64_t span = 0;
  if (!stream.events.empty()) span = stream.events.back().t - stream.events.front().t;
  return std::max<std::uint64_t>(span, frames);
}

/// Non-overlapping factor x factor sum pooling per channel and frame.
inline EventCounts downsample(const EventCounts& raw, std::size_t factor = 4) {
  if (factor == 0 || raw.height % factor != 0 || raw.width % factor != 0)
    throw ShapeError("downsample: height and width must be divisible by " +
                     std::to_string(factor));
  EventCounts out(raw.frames, raw.channels, raw.height / factor, raw.width / factor, raw.dt_us);
  for (std::size_t t = 0; t < raw.frames; ++t)
    for (std::size_t c = 0; c < raw.channels; ++c)
      for (std::size_t y = 0; y < raw.height; ++y)
        for (std::size_t x = 0; x < raw.width; ++x)
          out.at(t, c, y / factor, x / factor) += raw.at(t, c, y, x);
  return out;
}

/// Divides by the sequence's global maximum (if positive).
inline FrameSequence normalize_frames(const EventCounts& counts) {
  FrameSequence f;
  f.frames = counts.frames;
  f.channels = counts.channels;
  f.height = counts.height;
  f.width = counts.width;
  f.dt_us = counts.dt_us;
  f.data.resize(counts.data.size());
  const std::uint32_t m =
      counts.data.empty() ? 0 : *std::max_element(counts.data.begin(), counts.data.end());
  for (std::size_t i = 0; i < counts.data.size(); ++i)
    f.data[i] = m > 0 ? static_cast<float>(counts.data[i]) / static_cast<float>(m)
                      : static_cast<float>(counts.data[i]);
  return f;
}

inline FrameSequence normalize_frames(FrameSequence f) {
  float m = 0.0f;
  for (float v : f.data) m = std::max(m, v);
  if (m > 0.0f)
    for (float& v : f.data) v /= m;
  return f;
}

/// Accumulate, downsample and normalize. `window_us == 0` means the full
/// recording.
inline FrameSequence preprocess(const EventStream& stream, std::size_t frames,
                                std::uint64_t window_us = 0, std::size_t factor = 4) {
  if (window_us == 0) window_us = full_window_us(stream, frames);
  return normalize_frames(downsample(accumulate_frames(stream, frames, window_us), factor));
}

// --- frame tensor files ---------------------------------------------------

/// Writes `<stem>.f32` (little-endian float32, row-major) and the
/// `<stem>.json` sidecar {T, C, H, W, dt_us, label}.
inline void write_frames(const std::filesystem::path& stem, const FrameSequence& f) {
  std::string bytes(f.data.size() * sizeof(float), '\0');
  std::memcpy(bytes.data(), f.data.data(), bytes.size());
  detail::write_file(std::filesystem::path(stem).concat(".f32"), bytes);
  nlohmann::ordered_json js;
  js["T"] = f.frames;
  js["C"] = f.channels;
  js["H"] = f.height;
  js["W"] = f.width;
  js["dt_us"] = f.dt_us;
  js["label"] = f.label ? nlohmann::ordered_json(*f.label) : nlohmann::ordered_json(nullptr);
  detail::write_file(std::filesystem::path(stem).concat(".json"), js.dump() + "\n");
}

inline FrameSequence read_frames(const std::filesystem::path& stem) {
  FrameSequence f;
  nlohmann::json js;
  try {
    js = nlohmann::json::parse(detail::read_file(std::filesystem::path(stem).concat(".json")));
    f.frames = js.at("T").get<std::size_t>();
    f.channels = js.at("C").get<std::size_t>();
    f.height = js.at("H").get<std::size_t>();
    f.width = js.at("W").get<std::size_t>();
    f.dt_us = js.at("dt_us").get<double>();
    if (!js.at("label").is_null()) f.label = js.at("label").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad frame sidecar for " + stem.string() + ": " + e.what());
  }
  const std::string bytes = detail::read_file(std::filesystem::path(stem).concat(".f32"));
  const std::size_t n = f.frames * f.frame_size();
  if (bytes.size() != n * sizeof(float))
    throw DataError("frame tensor " + stem.string() + ".f32 has " + std::to_string(bytes.size()) +
                    " bytes, sidecar implies " + std::to_string(n * sizeof(float)));
  f.data.resize(n);
  std::memcpy(f.data.data(), bytes.data(), bytes.size());
  f.source = stem.filename().string();
  return f;
}

}  // namespace ltcsnn
