#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gsp {

// Planar-free interleaved float image, row-major, `channels` floats per
// pixel. Image buffers are 32-bit; world-space math stays in doubles.
class Image {
  public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.f)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<size_t>(width) * height * channels, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }

    float& at(int x, int y, int c = 0) {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }
    float at(int x, int y, int c = 0) const {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }

    float* pixel(int x, int y) { return &data_[(static_cast<size_t>(y) * width_ + x) * channels_]; }
    const float* pixel(int x, int y) const {
        return &data_[(static_cast<size_t>(y) * width_ + x) * channels_];
    }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    bool same_shape(const Image& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
    }

  private:
    int width_ = 0, height_ = 0, channels_ = 0;
    std::vector<float> data_;
};

// Mean squared error over all channels, values clamped to [0,1].
double mse(const Image& a, const Image& b);

// 10 log10(1 / mse) on clamped linear data; +inf for identical images.
double psnr(const Image& a, const Image& b);

inline float srgb_encode(float linear) {
    float v = std::clamp(linear, 0.0f, 1.0f);
    return v <= 0.0031308f ? 12.92f * v : 1.055f * std::pow(v, 1.0f / 2.4f) - 0.055f;
}

inline float srgb_decode(float encoded) {
    float v = std::clamp(encoded, 0.0f, 1.0f);
    return v <= 0.04045f ? v / 12.92f : std::pow((v + 0.055f) / 1.055f, 2.4f);
}

} // namespace gsp
