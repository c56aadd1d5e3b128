#include "davss/mixer.hpp"

#include <algorithm>
#include <cmath>

#include "davss/rng.hpp"

namespace davss {

namespace {

bool filter_admits(ClassFilter filter, const std::vector<ClassTraits>& categories, int class_id) {
    if (filter == ClassFilter::All) return true;
    if (categories.empty() || class_id >= static_cast<int>(categories.size())) return true;
    const ClassTraits& t = categories[class_id];
    switch (filter) {
        case ClassFilter::Things: return t.is_thing;
        case ClassFilter::Stuffs: return !t.is_thing;
        case ClassFilter::Movable: return t.is_thing && t.is_movable;
        case ClassFilter::Stationary: return t.is_thing && !t.is_movable;
        default: return true;
    }
}

void mix_frame(const Frame& src, const Frame& tgt, const BinaryMap& mask, Frame& out) {
    require(src.height == tgt.height && src.width == tgt.width && src.channels == tgt.channels,
            "mix: frame shape mismatch");
    require(src.height == mask.height && src.width == mask.width, "mix: mask shape mismatch");
    out = tgt;
    const int c = src.channels;
    for (size_t p = 0; p < mask.data.size(); ++p) {
        if (!mask.data[p]) continue;
        for (int k = 0; k < c; ++k) out.data[p * c + k] = src.data[p * c + k];
    }
}

}  // namespace

std::vector<int> select_classes(const LabelMap& source_label_t, const MixConfig& cfg,
                                std::uint64_t draw_index) {
    require(cfg.class_ratio >= 0.0 && cfg.class_ratio <= 1.0, "select_classes: ratio outside [0,1]");

    std::vector<std::uint8_t> present(source_label_t.num_classes, 0);
    for (std::uint8_t v : source_label_t.data) {
        if (v != kIgnoreLabel) present[v] = 1;
    }
    std::vector<int> pool;
    for (int c = 0; c < source_label_t.num_classes; ++c) {
        if (present[c] && filter_admits(cfg.class_filter, cfg.categories, c)) pool.push_back(c);
    }
    if (pool.empty()) return {};

    const size_t take = static_cast<size_t>(std::ceil(cfg.class_ratio * static_cast<double>(pool.size())));
    if (take >= pool.size()) return pool;

    auto rng = make_rng(cfg.rng_seed, draw_index);
    // Partial Fisher-Yates: only the first `take` slots matter.
    for (size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    return pool;
}

std::pair<BinaryMap, BinaryMap> build_masks(const LabelMap& label_prev, const LabelMap& label_cur,
                                            const std::vector<int>& selected) {
    require(label_prev.height == label_cur.height && label_prev.width == label_cur.width,
            "build_masks: label shape mismatch");
    std::vector<std::uint8_t> lut(256, 0);
    for (int c : selected) lut[static_cast<std::uint8_t>(c)] = 1;
    lut[kIgnoreLabel] = 0;

    BinaryMap m_prev(label_prev.height, label_prev.width);
    BinaryMap m_cur(label_cur.height, label_cur.width);
    for (size_t i = 0; i < label_prev.data.size(); ++i) m_prev.data[i] = lut[label_prev.data[i]];
    for (size_t i = 0; i < label_cur.data.size(); ++i) m_cur.data[i] = lut[label_cur.data[i]];
    return {std::move(m_prev), std::move(m_cur)};
}

MixResult mix_cmom(const SourceWindow& source, const TargetWindow& target,
                   const LabelMap& target_pseudo_label_t, const MixConfig& cfg,
                   std::uint64_t draw_index) {
    require(source.frame_prev && source.frame_cur && source.label_prev && source.label_cur &&
                source.flow && target.frame_prev && target.frame_cur && target.flow,
            "mix_cmom: incomplete window");

    MixResult out;
    out.selected_classes = select_classes(*source.label_cur, cfg, draw_index);
    auto [m_prev, m_cur] = build_masks(*source.label_prev, *source.label_cur, out.selected_classes);

    mix_frame(*source.frame_prev, *target.frame_prev, m_prev, out.mixed_frame_prev);
    mix_frame(*source.frame_cur, *target.frame_cur, m_cur, out.mixed_frame_cur);

    require(source.label_cur->height == target_pseudo_label_t.height &&
                source.label_cur->width == target_pseudo_label_t.width,
            "mix_cmom: pseudo-label shape mismatch");
    out.mixed_label = target_pseudo_label_t;
    for (size_t i = 0; i < m_cur.data.size(); ++i) {
        if (m_cur.data[i]) out.mixed_label.data[i] = source.label_cur->data[i];
    }

    require(source.flow->height == target.flow->height && source.flow->width == target.flow->width,
            "mix_cmom: flow shape mismatch");
    out.mixed_flow = *target.flow;
    for (size_t i = 0; i < m_prev.data.size(); ++i) {
        if (m_prev.data[i]) {
            out.mixed_flow.data[i * 2 + 0] = source.flow->data[i * 2 + 0];
            out.mixed_flow.data[i * 2 + 1] = source.flow->data[i * 2 + 1];
        }
    }

    out.mask_prev = std::move(m_prev);
    out.mask_cur = std::move(m_cur);
    return out;
}

DacsResult mix_dacs(const Frame& source_frame_t, const Frame& target_frame_t,
                    const LabelMap& source_label_t, const LabelMap& target_pseudo_label_t,
                    const MixConfig& cfg, std::uint64_t draw_index) {
    DacsResult out;
    out.selected_classes = select_classes(source_label_t, cfg, draw_index);
    auto [mask, mask_same] = build_masks(source_label_t, source_label_t, out.selected_classes);
    (void)mask_same;

    mix_frame(source_frame_t, target_frame_t, mask, out.mixed_frame);

    require(source_label_t.height == target_pseudo_label_t.height &&
                source_label_t.width == target_pseudo_label_t.width,
            "mix_dacs: pseudo-label shape mismatch");
    out.mixed_label = target_pseudo_label_t;
    for (size_t i = 0; i < mask.data.size(); ++i) {
        if (mask.data[i]) out.mixed_label.data[i] = source_label_t.data[i];
    }
    out.mask = std::move(mask);
    return out;
}

}  // namespace davss
