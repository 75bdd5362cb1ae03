#include "vmav/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace vmav {

namespace {

inline void put(std::vector<float>& img, int h, int w, int y, int x, float r,
                float g, float b) {
  img[static_cast<std::size_t>(0 * h * w + y * w + x)] = r;
  img[static_cast<std::size_t>(1 * h * w + y * w + x)] = g;
  img[static_cast<std::size_t>(2 * h * w + y * w + x)] = b;
}

// Squared distance from point p to the segment a + t*d, t in [0, len].
inline double seg_dist2(double px, double py, double ax, double ay, double dx,
                        double dy, double len) {
  double t = (px - ax) * dx + (py - ay) * dy;
  t = std::clamp(t, 0.0, len);
  double cx = ax + t * dx;
  double cy = ay + t * dy;
  return (px - cx) * (px - cx) + (py - cy) * (py - cy);
}

}  // namespace

std::vector<float> render(const CartState& s, const RenderConfig& cfg) {
  const int H = cfg.raw_h, W = cfg.raw_w;
  std::vector<float> img(static_cast<std::size_t>(3 * H * W), 1.0f);

  const double cx = W / 2.0 + cfg.px_per_unit * s.x;
  const double cy = cfg.cart_row;
  const double sin_t = std::sin(s.theta);
  const double cos_t = std::cos(s.theta);
  // Pole base sits on the cart top, pointing up when theta = 0.
  const double bx = cx;
  const double by = cy - cfg.cart_half_h;
  const double dx = sin_t;
  const double dy = -cos_t;
  const double pole_r2 = cfg.pole_half_w * cfg.pole_half_w;

  // Track line spans the full width.
  int tr0 = std::max(0, int(std::ceil(cy - cfg.track_half_h - 0.5)));
  int tr1 = std::min(H - 1, int(std::floor(cy + cfg.track_half_h - 0.5)));
  for (int y = tr0; y <= tr1; ++y)
    for (int x = 0; x < W; ++x) put(img, H, W, y, x, 0.0f, 0.0f, 0.0f);

  // Cart rectangle; pixel-center coverage keeps mirror states exact mirrors.
  for (int y = 0; y < H; ++y) {
    double py = y + 0.5;
    bool in_cart_row = std::abs(py - cy) <= cfg.cart_half_h;
    for (int x = 0; x < W; ++x) {
      double px = x + 0.5;
      if (in_cart_row && std::abs(px - cx) <= cfg.cart_half_w)
        put(img, H, W, y, x, 0.0f, 0.0f, 0.0f);
    }
  }

  // Pole on top, drawn as a capsule around the segment.
  int x_lo = std::max(0, int(cx - cfg.pole_len - 4));
  int x_hi = std::min(W - 1, int(cx + cfg.pole_len + 4));
  int y_lo = std::max(0, int(by - cfg.pole_len - 4));
  int y_hi = std::min(H - 1, int(by + cfg.pole_len + 4));
  for (int y = y_lo; y <= y_hi; ++y) {
    double py = y + 0.5;
    for (int x = x_lo; x <= x_hi; ++x) {
      double px = x + 0.5;
      if (seg_dist2(px, py, bx, by, dx, dy, cfg.pole_len) <= pole_r2)
        put(img, H, W, y, x, 0.8f, 0.6f, 0.4f);
    }
  }
  return img;
}

std::vector<float> preprocess(const std::vector<float>& raw, double cart_x,
                              const RenderConfig& cfg) {
  const int H = cfg.raw_h, W = cfg.raw_w;
  VMAV_CHECK(raw.size() == static_cast<std::size_t>(3 * H * W),
             "preprocess: raw frame size mismatch");
  VMAV_CHECK(cfg.crop_h % cfg.out_h == 0 && cfg.crop_w % cfg.out_w == 0,
             "preprocess: crop must be an integer multiple of output");
  const int by = cfg.crop_h / cfg.out_h;
  const int bx = cfg.crop_w / cfg.out_w;

  const double cx = W / 2.0 + cfg.px_per_unit * cart_x;
  int col0 = int(std::lround(cx)) - cfg.crop_w / 2;
  col0 = std::clamp(col0, 0, W - cfg.crop_w);
  int row0 = std::clamp(cfg.crop_row0, 0, H - cfg.crop_h);

  std::vector<float> out(static_cast<std::size_t>(3 * cfg.out_h * cfg.out_w));
  const float inv = 1.0f / float(bx * by);
  for (int c = 0; c < 3; ++c) {
    const float* plane = raw.data() + static_cast<std::size_t>(c) * H * W;
    for (int oy = 0; oy < cfg.out_h; ++oy)
      for (int ox = 0; ox < cfg.out_w; ++ox) {
        float acc = 0.0f;
        for (int yy = 0; yy < by; ++yy) {
          const float* row = plane + (row0 + oy * by + yy) * W;
          for (int xx = 0; xx < bx; ++xx)
            acc += row[col0 + ox * bx + xx];
        }
        out[static_cast<std::size_t>((c * cfg.out_h + oy) * cfg.out_w + ox)] =
            acc * inv;
      }
  }
  return out;
}

void write_ppm(const std::vector<float>& img, int h, int w,
               const std::string& path) {
  VMAV_CHECK(img.size() == static_cast<std::size_t>(3 * h * w),
             "write_ppm: size mismatch");
  std::ofstream f(path, std::ios::binary);
  VMAV_CHECK(f.good(), "write_ppm: cannot open " + path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = img[static_cast<std::size_t>((c * h + y) * w + x)];
        v = std::clamp(v, 0.0f, 1.0f);
        f.put(static_cast<char>(std::lround(v * 255.0f)));
      }
}

}  // namespace vmav
