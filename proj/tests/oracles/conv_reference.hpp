#pragma once

#include <cstddef>
#include <type_traits>
#include <vector>

namespace gmseg::oracle {

// Textbook cross-correlation: explicit zero-padded copy of the input, then
// y = b + sum_ci sum_ky sum_kx w * xpad, accumulated in that order.
// Circular mode wraps indices instead of padding. Dilation 1 unless given.
template <typename T>
std::vector<T> conv2d_reference(const std::vector<T>& x, std::size_t batch, std::size_t cin, std::size_t h,
                                std::size_t w, const std::vector<T>& weight, std::size_t cout, std::size_t kh,
                                std::size_t kw, const std::type_identity_t<std::vector<T>>* bias, long pad_top, long pad_left,
                                long pad_bottom, long pad_right, long dilation = 1, bool circular = false) {
  const long hp = static_cast<long>(h) + pad_top + pad_bottom;
  const long wp = static_cast<long>(w) + pad_left + pad_right;
  const long ho = hp - dilation * (static_cast<long>(kh) - 1);
  const long wo = wp - dilation * (static_cast<long>(kw) - 1);
  std::vector<T> xpad(batch * cin * hp * wp, T{0});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cin; ++c)
      for (long y = 0; y < hp; ++y)
        for (long xx = 0; xx < wp; ++xx) {
          long sy = y - pad_top, sx = xx - pad_left;
          if (circular) {
            sy = ((sy % static_cast<long>(h)) + static_cast<long>(h)) % static_cast<long>(h);
            sx = ((sx % static_cast<long>(w)) + static_cast<long>(w)) % static_cast<long>(w);
          } else if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) {
            continue;
          }
          xpad[((b * cin + c) * hp + y) * wp + xx] = x[((b * cin + c) * h + sy) * w + sx];
        }
  std::vector<T> y(batch * cout * ho * wo);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (long oy = 0; oy < ho; ++oy)
        for (long ox = 0; ox < wo; ++ox) {
          T acc = bias ? (*bias)[co] : T{0};
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = oy + static_cast<long>(ky) * dilation;
                const long ix = ox + static_cast<long>(kx) * dilation;
                acc += weight[((co * cin + ci) * kh + ky) * kw + kx] * xpad[((b * cin + ci) * hp + iy) * wp + ix];
              }
          y[((b * cout + co) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

}  // namespace gmseg::oracle
