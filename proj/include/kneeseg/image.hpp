#pragma once

#include <cstdint>
#include <vector>

namespace kneeseg {

/// Single-channel 2D image, intensities in [0,1]. Pixel p = x + width*y.
struct GrayImage2D {
    int width = 0, height = 0;
    std::vector<double> pixels;

    GrayImage2D() = default;
    GrayImage2D(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    double at(int x, int y) const { return pixels[x + static_cast<size_t>(width) * y]; }
    double& at(int x, int y) { return pixels[x + static_cast<size_t>(width) * y]; }
    std::size_t size() const { return pixels.size(); }
};

struct BinaryMask2D {
    int width = 0, height = 0;
    std::vector<std::uint8_t> bits;

    BinaryMask2D() = default;
    BinaryMask2D(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return bits[x + static_cast<size_t>(width) * y] != 0; }
    void set(int x, int y, bool v) { bits[x + static_cast<size_t>(width) * y] = v ? 1 : 0; }
    std::size_t count() const;
};

enum class TriLabel : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

/// Per-pixel {background, unknown, foreground} partition.
struct Trimap2D {
    int width = 0, height = 0;
    std::vector<TriLabel> labels;

    Trimap2D() = default;
    Trimap2D(int w, int h)
        : width(w), height(h),
          labels(static_cast<size_t>(w) * h, TriLabel::Background) {}

    TriLabel at(int x, int y) const { return labels[x + static_cast<size_t>(width) * y]; }
    std::size_t count(TriLabel l) const;
};

/// Opacity map produced by the matting solve; values clamped to [0,1].
struct AlphaMatte2D {
    int width = 0, height = 0;
    std::vector<double> alpha;

    AlphaMatte2D() = default;
    AlphaMatte2D(int w, int h)
        : width(w), height(h), alpha(static_cast<size_t>(w) * h, 0.0) {}
};

/// Per-pixel class ids for one slice; class 0 is background.
struct LabelSlice {
    int width = 0, height = 0;
    std::vector<std::uint8_t> labels;

    LabelSlice() = default;
    LabelSlice(int w, int h)
        : width(w), height(h), labels(static_cast<size_t>(w) * h, 0) {}
};

/// Superposition of the two path predictions:
/// foreground where both predict, background where neither does,
/// unknown where exactly one does.
Trimap2D generate_trimap(const BinaryMask2D& pred_source, const BinaryMask2D& pred_lowrank);

}  // namespace kneeseg
