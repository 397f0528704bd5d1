#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vlafp/common.hpp"

namespace vlafp {

/// Mono signal a[n] with its sampling rate.
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 8000.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate() const {
    require(sample_rate > 0.0, "sample_rate must be positive");
  }

  /// Copy of [begin, begin + count), zero padded past the end.
  Waveform slice(std::size_t begin, std::size_t count) const {
    Waveform out{std::vector<double>(count, 0.0), sample_rate};
    if (begin < samples.size()) {
      const std::size_t n = std::min(count, samples.size() - begin);
      std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(begin), n, out.samples.begin());
    }
    return out;
  }
};

inline double peak_abs(std::span<const double> x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  return peak;
}

inline double mean_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

inline Waveform concat(std::span<const Waveform> parts) {
  require(!parts.empty(), "concat: no parts");
  Waveform out{{}, parts.front().sample_rate};
  for (const auto& p : parts) {
    require(p.sample_rate == out.sample_rate, "concat: sample rate mismatch");
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  return out;
}

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!is) throw Error("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Reads a mono RIFF/WAVE file: PCM 16-bit or IEEE float 32-bit.
inline Waveform read_wav(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  char tag[4];
  auto read_tag = [&] {
    in.read(tag, 4);
    if (!in) throw Error(path.string() + ": truncated header");
    return std::string(tag, 4);
  };
  if (read_tag() != "RIFF") throw Error(path.string() + ": not a RIFF file");
  detail::get_le<std::uint32_t>(in);
  if (read_tag() != "WAVE") throw Error(path.string() + ": not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (true) {
    const std::string id = read_tag();
    const auto size = detail::get_le<std::uint32_t>(in);
    if (id == "fmt ") {
      format = detail::get_le<std::uint16_t>(in);
      channels = detail::get_le<std::uint16_t>(in);
      rate = detail::get_le<std::uint32_t>(in);
      detail::get_le<std::uint32_t>(in);
      detail::get_le<std::uint16_t>(in);
      bits = detail::get_le<std::uint16_t>(in);
      if (size > 16) in.seekg(size - 16 + (size & 1U), std::ios::cur);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(path.string() + ": data chunk before fmt chunk");
      if (channels != 1) throw Error(path.string() + ": only mono audio is supported");
      if (format == 0xFFFE) format = bits == 32 ? 3 : 1;  // WAVE_FORMAT_EXTENSIBLE
      Waveform w{{}, static_cast<double>(rate)};
      if (format == 1 && bits == 16) {
        w.samples.resize(size / 2);
        for (auto& s : w.samples) s = detail::get_le<std::int16_t>(in) / 32768.0;
      } else if (format == 3 && bits == 32) {
        w.samples.resize(size / 4);
        for (auto& s : w.samples) s = detail::get_le<float>(in);
      } else {
        throw Error(path.string() + ": unsupported sample format (need PCM16 or float32)");
      }
      return w;
    } else {
      in.seekg(size + (size & 1U), std::ios::cur);
    }
  }
}

/// Writes a mono IEEE float 32-bit WAVE file.
inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  auto out = detail::open_output(path);
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 4);
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  out.write("RIFF", 4);
  detail::put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  detail::put_le<std::uint32_t>(out, 16);
  detail::put_le<std::uint16_t>(out, 3);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint32_t>(out, rate);
  detail::put_le<std::uint32_t>(out, rate * 4);
  detail::put_le<std::uint16_t>(out, 4);
  detail::put_le<std::uint16_t>(out, 32);
  out.write("data", 4);
  detail::put_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) detail::put_le<float>(out, static_cast<float>(s));
  if (!out) throw Error("failed writing " + path.string());
}

/// Raw little-endian float32 mono samples; the rate is supplied by the caller.
inline Waveform read_raw_f32(const std::filesystem::path& path, double sample_rate) {
  auto in = detail::open_input(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  Waveform w{std::vector<double>(bytes / 4), sample_rate};
  for (auto& s : w.samples) s = detail::get_le<float>(in);
  return w;
}

/// Loads .wav or .f32/.raw audio and rejects rates other than `expected_rate`.
inline Waveform load_audio(const std::filesystem::path& path, double expected_rate = 8000.0) {
  if (!std::filesystem::exists(path)) throw Error("no such file: " + path.string());
  const auto ext = path.extension().string();
  Waveform w = (ext == ".f32" || ext == ".raw") ? read_raw_f32(path, expected_rate) : read_wav(path);
  if (w.sample_rate != expected_rate)
    throw Error(path.string() + ": sample rate " + std::to_string(w.sample_rate) + " != expected " +
                std::to_string(expected_rate) + " (resample before use)");
  return w;
}

/// Audio files (.wav/.f32/.raw) directly inside `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_audio_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".wav" || ext == ".f32" || ext == ".raw")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace vlafp
