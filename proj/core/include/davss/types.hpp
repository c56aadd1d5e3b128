#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace davss {

// Label value excluded from every loss and metric.
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// RGB-style image, values in [0,1], row-major with interleaved channels.
struct Frame {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Frame() = default;
    Frame(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

/// Per-pixel semantic class ids (kIgnoreLabel marks unlabeled pixels).
struct LabelMap {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::vector<std::uint8_t> data;

    LabelMap() = default;
    LabelMap(int h, int w, int nc) : height(h), width(w), num_classes(nc), data(static_cast<size_t>(h) * w, kIgnoreLabel) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

/// Dense displacement field, two components (dx, dy) per pixel.
///
/// Convention: flow_{t-tau->t}(p) = d means pixel p of frame t corresponds
/// to pixel p - d of frame t-tau. Every warp in this project is a backward
/// warp under this rule.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // interleaved (dx, dy)

    FlowField() = default;
    FlowField(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 2, 0.0) {}

    double& dx(int y, int x) { return data[(static_cast<size_t>(y) * width + x) * 2 + 0]; }
    double& dy(int y, int x) { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
    double dx(int y, int x) const { return data[(static_cast<size_t>(y) * width + x) * 2 + 0]; }
    double dy(int y, int x) const { return data[(static_cast<size_t>(y) * width + x) * 2 + 1]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

/// Dense feature grid, `dim` values per cell, row-major interleaved.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int dim = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(int h, int w, int d) : height(h), width(w), dim(d), data(static_cast<size_t>(h) * w * d, 0.0) {}

    double* cell(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * dim; }
    const double* cell(int y, int x) const { return data.data() + (static_cast<size_t>(y) * width + x) * dim; }
    double& at(int y, int x, int d) { return data[(static_cast<size_t>(y) * width + x) * dim + d]; }
    double at(int y, int x, int d) const { return data[(static_cast<size_t>(y) * width + x) * dim + d]; }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

/// 0/1 map used for selection masks, validity masks and consensus masks.
struct BinaryMap {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    BinaryMap() = default;
    BinaryMap(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
    size_t count() const;
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Reduce a label map to a coarser grid by per-block majority vote.
/// Ties go to the smallest class id; IGNORE wins only on strict majority.
/// Block edges must divide evenly (integer downsampling ratios).
LabelMap downsample_labels(const LabelMap& labels, int fheight, int fwidth);

}  // namespace davss
