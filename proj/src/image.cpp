#include "kneeseg/image.hpp"

#include <algorithm>

#include "kneeseg/errors.hpp"

namespace kneeseg {

std::size_t BinaryMask2D::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t Trimap2D::count(TriLabel l) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l));
}

Trimap2D generate_trimap(const BinaryMask2D& pred_source, const BinaryMask2D& pred_lowrank) {
    if (pred_source.width != pred_lowrank.width || pred_source.height != pred_lowrank.height)
        throw usage_error("generate_trimap: mask dimensions differ");
    Trimap2D tri(pred_source.width, pred_source.height);
    for (size_t p = 0; p < tri.labels.size(); ++p) {
        const bool s = pred_source.bits[p] != 0;
        const bool t = pred_lowrank.bits[p] != 0;
        if (s && t)
            tri.labels[p] = TriLabel::Foreground;
        else if (!s && !t)
            tri.labels[p] = TriLabel::Background;
        else
            tri.labels[p] = TriLabel::Unknown;
    }
    return tri;
}

}  // namespace kneeseg
