#include "vmav/storage.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace vmav {

namespace {

static_assert(sizeof(float) == 4, "float must be 32-bit");

void sha256(const void* data, std::size_t n, unsigned char out[32]) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  VMAV_CHECK(ctx != nullptr, "sha256: EVP context allocation failed");
  unsigned int len = 0;
  int ok = EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) &&
           EVP_DigestUpdate(ctx, data, n) &&
           EVP_DigestFinal_ex(ctx, out, &len);
  EVP_MD_CTX_free(ctx);
  VMAV_CHECK(ok == 1 && len == 32, "sha256: digest failed");
}

std::uint64_t checksum64(const std::vector<char>& bytes) {
  unsigned char d[32];
  sha256(bytes.data(), bytes.size(), d);
  std::uint64_t c = 0;
  for (int i = 0; i < 8; ++i) c |= std::uint64_t(d[i]) << (8 * i);
  return c;
}

struct Writer {
  std::vector<char> buf;

  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
};

struct Reader {
  const std::vector<char>& buf;
  std::size_t pos = 0;

  explicit Reader(const std::vector<char>& b) : buf(b) {}

  void need(std::size_t n) {
    VMAV_CHECK(pos + n <= buf.size(), "truncated file");
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    need(1);
    return std::uint8_t(buf[pos++]);
  }
  std::uint16_t u16() {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= std::uint16_t(u8()) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

void write_atomic(const std::string& path, const std::vector<char>& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    VMAV_CHECK(f.good(), "cannot open for writing: " + tmp);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    VMAV_CHECK(f.good(), "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  VMAV_CHECK(f.good(), "cannot open for reading: " + path);
  std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(n), '\0');
  f.read(bytes.data(), n);
  VMAV_CHECK(f.good(), "read failed: " + path);
  return bytes;
}

// Verifies and strips the trailing checksum, leaving payload bytes.
std::vector<char> checked_body(std::vector<char> bytes,
                               const std::string& what) {
  VMAV_CHECK(bytes.size() >= 8, "truncated file: " + what);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= std::uint64_t(std::uint8_t(bytes[bytes.size() - 8 + i]))
              << (8 * i);
  bytes.resize(bytes.size() - 8);
  VMAV_CHECK(checksum64(bytes) == stored, "checksum failure: " + what);
  return bytes;
}

}  // namespace

void EpisodeStore::frame(const Episode& e, int t, float* out) const {
  const int fs = frame_size();
  VMAV_CHECK(t >= 0 && t < frame_count(e), "frame index out of range");
  if (quantized) {
    const std::uint8_t* src = e.frames_u8.data() + std::size_t(t) * fs;
    for (int i = 0; i < fs; ++i) out[i] = dequantize_u8(src[i]);
  } else {
    std::memcpy(out, e.frames_f32.data() + std::size_t(t) * fs,
                std::size_t(fs) * 4);
  }
}

void EpisodeStore::push_frame(Episode& e, const float* f) const {
  const int fs = frame_size();
  if (quantized) {
    for (int i = 0; i < fs; ++i) e.frames_u8.push_back(quantize_u8(f[i]));
  } else {
    e.frames_f32.insert(e.frames_f32.end(), f, f + fs);
  }
}

void write_episodes(const EpisodeStore& store, const std::string& path) {
  Writer w;
  w.raw("VMEP", 4);
  w.u32(1);
  w.u32(std::uint32_t(store.frame_h));
  w.u32(std::uint32_t(store.frame_w));
  w.u32(std::uint32_t(store.channels));
  w.u8(store.quantized ? 1 : 0);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(std::uint32_t(store.episodes.size()));
  const int fs = store.frame_size();
  for (const auto& e : store.episodes) {
    const int T = e.length();
    VMAV_CHECK(store.frame_count(e) == T + 1,
               "write_episodes: episode must hold length+1 frames");
    VMAV_CHECK(e.rewards.size() == std::size_t(T) &&
                   e.dones.size() == std::size_t(T),
               "write_episodes: ragged episode arrays");
    w.u32(std::uint32_t(T));
    auto put_frame = [&](int t) {
      if (store.quantized)
        w.raw(e.frames_u8.data() + std::size_t(t) * fs, std::size_t(fs));
      else
        w.raw(e.frames_f32.data() + std::size_t(t) * fs,
              std::size_t(fs) * 4);
    };
    for (int t = 0; t < T; ++t) {
      put_frame(t);
      w.u8(e.actions[std::size_t(t)]);
      w.f32(e.rewards[std::size_t(t)]);
      w.u8(e.dones[std::size_t(t)]);
    }
    put_frame(T);
  }
  w.u64(checksum64(w.buf));
  write_atomic(path, w.buf);
}

EpisodeStore read_episodes(const std::string& path) {
  std::vector<char> body = checked_body(read_all(path), path);
  Reader r(body);
  char magic[4];
  r.raw(magic, 4);
  VMAV_CHECK(std::memcmp(magic, "VMEP", 4) == 0,
             "version mismatch: bad magic in " + path);
  std::uint32_t version = r.u32();
  VMAV_CHECK(version == 1, "version mismatch: unsupported episode-store "
                           "version " + std::to_string(version));
  EpisodeStore store;
  store.frame_h = int(r.u32());
  store.frame_w = int(r.u32());
  store.channels = int(r.u32());
  store.quantized = r.u8() != 0;
  r.u8();
  r.u8();
  r.u8();
  std::uint32_t n_ep = r.u32();
  const int fs = store.frame_size();
  store.episodes.resize(n_ep);
  for (auto& e : store.episodes) {
    std::uint32_t T = r.u32();
    auto get_frame = [&]() {
      if (store.quantized) {
        std::size_t off = e.frames_u8.size();
        e.frames_u8.resize(off + std::size_t(fs));
        r.raw(e.frames_u8.data() + off, std::size_t(fs));
      } else {
        std::size_t off = e.frames_f32.size();
        e.frames_f32.resize(off + std::size_t(fs));
        r.raw(e.frames_f32.data() + off, std::size_t(fs) * 4);
      }
    };
    for (std::uint32_t t = 0; t < T; ++t) {
      get_frame();
      e.actions.push_back(r.u8());
      e.rewards.push_back(r.f32());
      e.dones.push_back(r.u8());
    }
    get_frame();
  }
  VMAV_CHECK(r.pos == body.size(), "truncated file: trailing bytes in " + path);
  return store;
}

void write_checkpoint(const ParamSet<float>& params,
                      const std::string& path) {
  Writer w;
  w.raw("VMCK", 4);
  w.u32(1);
  w.u32(std::uint32_t(params.size()));
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    VMAV_CHECK(p.name.size() <= 0xffff, "parameter name too long: " + p.name);
    w.u16(std::uint16_t(p.name.size()));
    w.raw(p.name.data(), p.name.size());
    w.u32(0);  // dtype f32
    w.u32(std::uint32_t(p.value.rows()));
    w.u32(std::uint32_t(p.value.cols()));
    w.u64(offset);
    offset += std::uint64_t(p.value.size()) * 4;
  }
  w.u64(offset);
  for (const auto& p : params)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j)
      for (Eigen::Index i = 0; i < p.value.rows(); ++i) w.f32(p.value(i, j));
  w.u64(checksum64(w.buf));
  write_atomic(path, w.buf);
}

void read_checkpoint(ParamSet<float>& params, const std::string& path) {
  std::vector<char> body = checked_body(read_all(path), path);
  Reader r(body);
  char magic[4];
  r.raw(magic, 4);
  VMAV_CHECK(std::memcmp(magic, "VMCK", 4) == 0,
             "version mismatch: bad magic in " + path);
  std::uint32_t version = r.u32();
  VMAV_CHECK(version == 1, "version mismatch: unsupported checkpoint "
                           "version " + std::to_string(version));
  std::uint32_t count = r.u32();
  VMAV_CHECK(count == params.size(),
             "checkpoint parameter count mismatch in " + path);
  struct Entry {
    std::string name;
    std::uint32_t rows, cols;
    std::uint64_t offset;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    std::uint16_t len = r.u16();
    e.name.resize(len);
    r.raw(e.name.data(), len);
    std::uint32_t dtype = r.u32();
    VMAV_CHECK(dtype == 0, "unsupported dtype in checkpoint " + path);
    e.rows = r.u32();
    e.cols = r.u32();
    e.offset = r.u64();
    manifest.push_back(std::move(e));
  }
  std::uint64_t payload_bytes = r.u64();
  std::size_t payload_start = r.pos;
  r.need(std::size_t(payload_bytes));
  for (const auto& e : manifest) {
    ParamTensor<float>* p = params.find(e.name);
    VMAV_CHECK(p != nullptr,
               "checkpoint names unknown parameter " + e.name + " in " + path);
    VMAV_CHECK(p->value.rows() == Eigen::Index(e.rows) &&
                   p->value.cols() == Eigen::Index(e.cols),
               "checkpoint shape mismatch for " + e.name + " in " + path);
    std::uint64_t bytes = std::uint64_t(e.rows) * e.cols * 4;
    VMAV_CHECK(e.offset + bytes <= payload_bytes,
               "truncated file: payload overrun in " + path);
    Reader pr(body);
    pr.pos = payload_start + std::size_t(e.offset);
    for (Eigen::Index j = 0; j < p->value.cols(); ++j)
      for (Eigen::Index i = 0; i < p->value.rows(); ++i)
        p->value(i, j) = pr.f32();
  }
}

std::string sha256_hex(const void* data, std::size_t n) {
  unsigned char d[32];
  sha256(data, n, d);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (int i = 0; i < 32; ++i) {
    out.push_back(hex[d[i] >> 4]);
    out.push_back(hex[d[i] & 0xf]);
  }
  return out;
}

}  // namespace vmav
