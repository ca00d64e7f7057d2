#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace tofsplat {

/// Planar multi-channel image of doubles. Channel c occupies the contiguous
/// block data[c*width*height .. (c+1)*width*height); rows are top-to-bottom.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    std::size_t plane_size() const { return static_cast<size_t>(width) * height; }
    std::size_t size() const { return data.size(); }

    double& at(int x, int y, int c = 0) {
        assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
        return data[static_cast<size_t>(c) * plane_size() + static_cast<size_t>(y) * width + x];
    }
    double at(int x, int y, int c = 0) const {
        assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
        return data[static_cast<size_t>(c) * plane_size() + static_cast<size_t>(y) * width + x];
    }

    const double* plane(int c) const { return data.data() + static_cast<size_t>(c) * plane_size(); }
    double* plane(int c) { return data.data() + static_cast<size_t>(c) * plane_size(); }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

/// Reserved sentinel for pixels without a valid value (zero-amplitude depth,
/// uncovered rays). Metric code skips sentinels and reports the skip count.
inline double invalid_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_valid(double v) { return std::isfinite(v); }

}  // namespace tofsplat
