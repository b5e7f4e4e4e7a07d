#pragma once

#include <cstdint>
#include <vector>

namespace sp4d {

// Dense row-major image, `channels` interleaved.
template <typename T>
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    T& at(int x, int y, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    T at(int x, int y, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

using ImageF = Image<double>;
using ImageU8 = Image<uint8_t>;

}  // namespace sp4d
