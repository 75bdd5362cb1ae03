#pragma once

#include <vector>

#include "vmav/cartpole.hpp"
#include "vmav/common.hpp"

namespace vmav {

// Images are flat float vectors in [0,1], channel-major:
// index = c*H*W + y*W + x.

struct RenderConfig {
  int raw_h = 400;
  int raw_w = 600;
  double px_per_unit = 125.0;   // track units -> pixel columns
  double cart_row = 300.0;      // vertical center of the cart
  double cart_half_w = 25.0;
  double cart_half_h = 15.0;
  double pole_len = 125.0;
  double pole_half_w = 1.0;
  double track_half_h = 1.0;
  int crop_h = 160;
  int crop_w = 320;
  int crop_row0 = 150;
  int out_h = 40;
  int out_w = 80;
};

inline int raw_size(const RenderConfig& c) { return 3 * c.raw_h * c.raw_w; }
inline int frame_size(const RenderConfig& c) { return 3 * c.out_h * c.out_w; }

std::vector<float> render(const CartState& s, const RenderConfig& cfg);

// Crops a crop_h x crop_w window horizontally centered on the cart (clamped
// to the frame) and block-averages down to out_h x out_w.
std::vector<float> preprocess(const std::vector<float>& raw, double cart_x,
                              const RenderConfig& cfg);

// Writes a binary PPM (P6, 8-bit) for visual inspection.
void write_ppm(const std::vector<float>& img, int h, int w,
               const std::string& path);

}  // namespace vmav
