#pragma once

#include <vector>

#include "davss/types.hpp"

namespace davss {

enum class ClassCategory { Stuff, Thing };

/// Backward-warped map plus per-pixel validity (1 where the sampled source
/// position lies fully inside the grid). Values at invalid pixels are
/// zero-filled and must be ignored by consumers.
struct WarpedFeatures {
    FeatureMap warped;
    BinaryMap validity;
};

struct WarpedLabels {
    LabelMap warped;
    BinaryMap validity;
};

WarpedFeatures warp_backward_bilinear(const FeatureMap& map, const FlowField& flow);
WarpedLabels warp_backward_nearest(const LabelMap& map, const FlowField& flow);

/// Adjoint of warp_backward_bilinear with respect to the input map: scatters
/// an upstream gradient on the warped output back onto the source grid.
FeatureMap warp_backward_bilinear_adjoint(const FeatureMap& grad_warped, const FlowField& flow);

/// Nearest-neighbor resampling of a flow field onto a coarser grid.
/// Displacements are rescaled by the grid ratio so they stay in grid units.
FlowField resample_flow(const FlowField& flow, int fheight, int fwidth);

/// v(p) = 1 iff pred_t(p) = c, warped previous prediction at p = c, and the
/// warp was valid at p. Pixels that change class between frames are never
/// trusted.
BinaryMap consensus_mask(const LabelMap& pred_t, const WarpedLabels& warped_prev, int class_id);

/// Splits one class mask into per-instance masks. Thing classes decompose
/// into 4-connected components (components under 2 pixels dropped), ordered
/// by their smallest linear pixel index. Stuff classes keep the whole mask
/// as a single instance.
std::vector<BinaryMap> split_instances(const BinaryMap& mask, ClassCategory category);

/// Fraction of warp-valid pixels where the nearest-warped previous map
/// disagrees with the current map.
double flow_violation_rate(const LabelMap& map_prev, const LabelMap& map_cur, const FlowField& flow);

}  // namespace davss
