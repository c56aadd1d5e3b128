#pragma once

#include <cstdint>
#include <vector>

#include "davss/flowops.hpp"
#include "davss/types.hpp"

namespace davss {

enum class ClassFilter { All, Things, Stuffs, Movable, Stationary };

struct ClassTraits {
    bool is_thing = false;
    bool is_movable = false;
};

struct MixConfig {
    double class_ratio = 0.75;                 // fraction of present classes to paste
    ClassFilter class_filter = ClassFilter::All;
    int tau = 1;                               // frame gap of a window
    std::uint64_t rng_seed = 0;
    std::vector<ClassTraits> categories;       // indexed by class id; empty = everything counts as All
};

/// Two consecutive frames of one clip plus the flow between them.
/// Labels ride along only on the source side of a mix.
struct SourceWindow {
    const Frame* frame_prev = nullptr;
    const Frame* frame_cur = nullptr;
    const LabelMap* label_prev = nullptr;
    const LabelMap* label_cur = nullptr;
    const FlowField* flow = nullptr;
};

struct TargetWindow {
    const Frame* frame_prev = nullptr;
    const Frame* frame_cur = nullptr;
    const FlowField* flow = nullptr;
};

struct MixResult {
    Frame mixed_frame_prev;
    Frame mixed_frame_cur;
    LabelMap mixed_label;    // pseudo-label at time t after pasting
    FlowField mixed_flow;
    BinaryMap mask_prev;
    BinaryMap mask_cur;
    std::vector<int> selected_classes;
};

struct DacsResult {
    Frame mixed_frame;
    LabelMap mixed_label;
    BinaryMap mask;
    std::vector<int> selected_classes;
};

/// Uniform random subset of ceil(class_ratio * |P|) classes, where P is the
/// set of classes present in the label restricted to the configured filter.
/// Deterministic in (label, cfg, draw_index).
std::vector<int> select_classes(const LabelMap& source_label_t, const MixConfig& cfg,
                                std::uint64_t draw_index);

/// Indicator masks of the selected classes in both source labels. The same
/// class set is used for both frames of the window.
std::pair<BinaryMap, BinaryMap> build_masks(const LabelMap& label_prev, const LabelMap& label_cur,
                                            const std::vector<int>& selected);

/// Pastes the selected source classes into the target window: frames at both
/// times, the pseudo-label at time t, and the flow, all mixed pointwise with
/// the frame-matched masks.
MixResult mix_cmom(const SourceWindow& source, const TargetWindow& target,
                   const LabelMap& target_pseudo_label_t, const MixConfig& cfg,
                   std::uint64_t draw_index);

/// Single-frame class mixing. Each call draws its own class set, so applying
/// it to both frames of a window breaks temporal coherence by design.
DacsResult mix_dacs(const Frame& source_frame_t, const Frame& target_frame_t,
                    const LabelMap& source_label_t, const LabelMap& target_pseudo_label_t,
                    const MixConfig& cfg, std::uint64_t draw_index);

}  // namespace davss
