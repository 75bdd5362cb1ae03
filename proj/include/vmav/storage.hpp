#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmav/autodiff.hpp"
#include "vmav/common.hpp"

namespace vmav {

// In-memory episode data. Frames are 3-channel images in [0,1], flattened
// channel-major. An episode of T steps stores T+1 frames: the observation
// before each action plus the terminal observation, so every transition
// (x_t, a_t, x_{t+1}, r_{t+1}, d_{t+1}) is materializable.
struct Episode {
  std::vector<std::uint8_t> frames_u8;  // quantized mode
  std::vector<float> frames_f32;        // float mode
  std::vector<std::uint8_t> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> dones;

  int length() const { return static_cast<int>(actions.size()); }
};

struct EpisodeStore {
  int frame_h = 40;
  int frame_w = 80;
  int channels = 3;
  bool quantized = true;
  std::vector<Episode> episodes;

  int frame_size() const { return channels * frame_h * frame_w; }
  int frame_count(const Episode& e) const {
    std::size_t n = quantized ? e.frames_u8.size() : e.frames_f32.size();
    return static_cast<int>(n / static_cast<std::size_t>(frame_size()));
  }
  // Decodes frame t of episode e into out[0..frame_size).
  void frame(const Episode& e, int t, float* out) const;
  // Appends a float frame, quantizing when the store is in quantized mode.
  void push_frame(Episode& e, const float* f) const;

  std::size_t total_steps() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.actions.size();
    return n;
  }
};

inline std::uint8_t quantize_u8(float v) {
  v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(v * 255.0f + 0.5f);
}

inline float dequantize_u8(std::uint8_t b) {
  return static_cast<float>(b) / 255.0f;
}

// File format "VMEP" v1 (all integers and floats little-endian):
//   bytes 0..3   magic "VMEP"
//   u32 version (=1)
//   u32 frame_h, u32 frame_w, u32 channels
//   u8 quantized flag, 3 zero pad bytes
//   u32 episode_count
//   per episode:
//     u32 length T
//     T step records: frame payload (frame_size u8 bytes if quantized,
//       else frame_size f32), action u8, reward f32, done u8
//     one trailing frame payload (the terminal observation)
//   u64 checksum: first 8 bytes of SHA-256 over everything before it
void write_episodes(const EpisodeStore& store, const std::string& path);
EpisodeStore read_episodes(const std::string& path);

// File format "VMCK" v1 (little-endian):
//   bytes 0..3   magic "VMCK"
//   u32 version (=1)
//   u32 param_count
//   per param: u16 name_len, name bytes, u32 dtype (0 = f32),
//     u32 rows, u32 cols, u64 byte offset into payload
//   u64 payload_bytes, then the contiguous f32 payload
//   u64 checksum: first 8 bytes of SHA-256 over everything before it
void write_checkpoint(const ParamSet<float>& params, const std::string& path);

// Loads into an existing set; every name must match in both directions and
// shapes must agree.
void read_checkpoint(ParamSet<float>& params, const std::string& path);

std::string sha256_hex(const void* data, std::size_t n);

}  // namespace vmav
