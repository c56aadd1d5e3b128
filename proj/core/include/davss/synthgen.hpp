#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "davss/dataset.hpp"
#include "davss/types.hpp"

namespace davss {

/// World layout of the moving-shapes benchmark. Classes 0..1 are stuff
/// (background, road band), 2..4 are movable shapes, 5..7 stationary posts.
/// All velocities are integer pixels per frame so ground-truth flow and
/// labels stay exactly consistent under nearest warping.
struct WorldSpec {
    int num_classes = 8;
    int clip_length = 4;  // T
    int height = 64;
    int width = 64;
    int scroll_dx = 1;  // image-space velocity of everything tied to the world
    int scroll_dy = 0;
    int object_speed_max = 2;  // per-component bound for movable shapes
    int min_objects = 3;
    int max_objects = 6;
    std::vector<double> rarity_weights;  // spawn weight per class (thing classes)
    std::uint64_t seed = 0;
};

struct DomainStyle {
    std::vector<std::array<double, 3>> palette;  // per-class base color
    double noise_sigma = 0.02;
    double gamma = 1.0;
};

/// One generated clip. Entity ids identify which scene object owns each
/// pixel (z-order resolved); they exist for occlusion-aware testing and are
/// not written to disk.
struct ClipSample {
    std::vector<Frame> frames;
    std::vector<LabelMap> labels;
    std::vector<FlowField> flows;                 // flows[t-1] = flow_{t-1 -> t}
    std::vector<std::vector<std::uint16_t>> entities;  // per frame, row-major
    bool is_source = false;
};

WorldSpec default_world();
DomainStyle default_source_style();
DomainStyle default_target_style();
std::vector<ClassTraits> class_categories(const WorldSpec& spec);

/// Deterministic in (spec.seed, clip_index); the style changes frame pixels
/// only, never labels or flows.
ClipSample generate_clip(const WorldSpec& spec, const DomainStyle& style, std::uint64_t clip_index);

/// Writes the full two-domain benchmark. Target clips use a disjoint index
/// stream from source clips; the trailing eval_fraction of target clips form
/// the labeled eval split, the rest are firewalled.
void generate_dataset(const WorldSpec& spec, const DomainStyle& source_style,
                      const DomainStyle& target_style, int n_source, int n_target,
                      double eval_fraction, const std::filesystem::path& root);

// Index stream offset separating target clip geometry from source clip
// geometry inside one dataset.
inline constexpr std::uint64_t kTargetClipIndexOffset = 1u << 20;

}  // namespace davss
