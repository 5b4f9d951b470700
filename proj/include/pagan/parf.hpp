#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pagan/errors.hpp"
#include "pagan/rf.hpp"

// PARF v1: little-endian container for one frame stack.
//   magic "PARF" | u32 version=1 | u32 n_samples | u32 n_elements | u32 n_frames
//   f32 sample_rate_hz | f32 speed_of_sound_mps | f32 element_pitch_m | f32 axial_offset_m
//   n_frames * n_samples * n_elements f32, frame-major then time-major.

namespace pagan {

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4);
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is, const std::string& path, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw IoError("PARF: truncated " + std::string(what) + " in " + path);
  return v;
}

}  // namespace detail

inline void write_parf(const std::filesystem::path& path, const FrameStack& stack) {
  if (stack.frames.empty()) throw InvalidArgument("write_parf: empty stack");
  const auto& g = stack.geometry();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("PARF: cannot open for writing: " + path.string());

  os.write("PARF", 4);
  detail::put<uint32_t>(os, 1u);
  detail::put<uint32_t>(os, static_cast<uint32_t>(g.n_samples));
  detail::put<uint32_t>(os, static_cast<uint32_t>(g.n_elements));
  detail::put<uint32_t>(os, static_cast<uint32_t>(stack.frames.size()));
  detail::put<float>(os, g.sample_rate_hz);
  detail::put<float>(os, g.speed_of_sound_mps);
  detail::put<float>(os, g.element_pitch_m);
  detail::put<float>(os, g.axial_offset_m);
  for (const auto& f : stack.frames) {
    if (f.samples.rows != g.n_samples || f.samples.cols != g.n_elements)
      throw InvalidArgument("write_parf: frame shape mismatch");
    os.write(reinterpret_cast<const char*>(f.samples.v.data()),
             static_cast<std::streamsize>(f.samples.size() * sizeof(float)));
  }
  if (!os) throw IoError("PARF: write failed: " + path.string());
}

inline FrameStack read_parf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("PARF: cannot open: " + path.string());
  const std::string p = path.string();

  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PARF", 4) != 0)
    throw IoError("PARF: bad magic in " + p);
  const auto version = detail::get<uint32_t>(is, p, "version");
  if (version != 1u) throw IoError("PARF: unsupported version in " + p);

  AcquisitionGeometry g;
  g.n_samples = static_cast<int>(detail::get<uint32_t>(is, p, "n_samples"));
  g.n_elements = static_cast<int>(detail::get<uint32_t>(is, p, "n_elements"));
  const int n_frames = static_cast<int>(detail::get<uint32_t>(is, p, "n_frames"));
  g.n_frames = n_frames;
  g.sample_rate_hz = detail::get<float>(is, p, "sample_rate");
  g.speed_of_sound_mps = detail::get<float>(is, p, "speed_of_sound");
  g.element_pitch_m = detail::get<float>(is, p, "element_pitch");
  g.axial_offset_m = detail::get<float>(is, p, "axial_offset");
  g.validate();

  FrameStack stack;
  stack.frames.reserve(n_frames);
  for (int f = 0; f < n_frames; ++f) {
    RfFrame frame{MatF(g.n_samples, g.n_elements), g, 1};
    if (!is.read(reinterpret_cast<char*>(frame.samples.v.data()),
                 static_cast<std::streamsize>(frame.samples.size() * sizeof(float))))
      throw IoError("PARF: truncated sample data in " + p);
    stack.frames.push_back(std::move(frame));
  }
  return stack;
}

// Sidecar text format: one "key = value" per line, '#' comments allowed.
using KeyValueMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline void write_keyvalues(const std::filesystem::path& path, const KeyValueMap& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("sidecar: cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

inline KeyValueMap read_keyvalues(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("sidecar: cannot open: " + path.string());
  KeyValueMap kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw IoError("sidecar: malformed line '" + t + "' in " + path.string());
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

}  // namespace pagan
