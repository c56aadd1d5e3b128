#include "davss/types.hpp"

#include <algorithm>

namespace davss {

size_t BinaryMap::count() const {
    size_t n = 0;
    for (std::uint8_t v : data) n += v != 0;
    return n;
}

LabelMap downsample_labels(const LabelMap& labels, int fheight, int fwidth) {
    require(fheight > 0 && fwidth > 0, "downsample_labels: empty output grid");
    require(fheight <= labels.height && fwidth <= labels.width,
            "downsample_labels: output larger than input");
    require(labels.height % fheight == 0 && labels.width % fwidth == 0,
            "downsample_labels: non-integer downsampling ratio");

    const int by = labels.height / fheight;
    const int bx = labels.width / fwidth;
    const size_t block = static_cast<size_t>(by) * bx;

    LabelMap out(fheight, fwidth, labels.num_classes);
    std::vector<size_t> histo(static_cast<size_t>(labels.num_classes), 0);

    for (int fy = 0; fy < fheight; ++fy) {
        for (int fx = 0; fx < fwidth; ++fx) {
            std::fill(histo.begin(), histo.end(), 0);
            size_t ignore_count = 0;
            for (int yy = fy * by; yy < (fy + 1) * by; ++yy) {
                for (int xx = fx * bx; xx < (fx + 1) * bx; ++xx) {
                    std::uint8_t v = labels.at(yy, xx);
                    if (v == kIgnoreLabel) {
                        ++ignore_count;
                    } else {
                        ++histo[v];
                    }
                }
            }
            if (ignore_count * 2 > block) {
                out.at(fy, fx) = kIgnoreLabel;
                continue;
            }
            size_t best_count = 0;
            int best_id = static_cast<int>(kIgnoreLabel);
            for (int c = 0; c < labels.num_classes; ++c) {
                if (histo[c] > best_count) {
                    best_count = histo[c];
                    best_id = c;
                }
            }
            out.at(fy, fx) = static_cast<std::uint8_t>(best_id);
        }
    }
    return out;
}

}  // namespace davss
