#pragma once

#include "sp4d/image.hpp"

// Image quality metrics on float images in [0, 1]. When an inclusion mask is
// given, masked-out pixels are zeroed in both inputs before any windowed
// statistic and excluded from the averages, so excluded content cannot leak
// into the scores.

namespace sp4d {

inline constexpr double kPsnrCap = 100.0;

// Peak signal-to-noise ratio in dB against peak 1.0, capped at kPsnrCap.
double psnr(const ImageF& a, const ImageF& b, const Image<uint8_t>* include = nullptr);

// Mean SSIM (11x11 Gaussian window, sigma 1.5, C1=0.01^2, C2=0.03^2,
// zero-padded), averaged over channels and included pixels.
double ssim(const ImageF& a, const ImageF& b, const Image<uint8_t>* include = nullptr);

// SSIM plus d(mean SSIM)/d(a). d_a is resized to match a.
double ssim_with_grad(const ImageF& a, const ImageF& b, const Image<uint8_t>* include,
                      ImageF& d_a);

}  // namespace sp4d
