#include "davss/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string_view>

#include "davss/rng.hpp"
#include "davss/tensor.hpp"

namespace davss {

namespace {

struct ShapeTemplate {
    int height;
    int width;
    std::vector<std::uint8_t> cells;  // row-major 0/1
};

ShapeTemplate from_pattern(std::initializer_list<const char*> rows) {
    ShapeTemplate t;
    t.height = static_cast<int>(rows.size());
    t.width = static_cast<int>(std::string_view(*rows.begin()).size());
    for (const char* row : rows) {
        for (const char* p = row; *p; ++p) t.cells.push_back(*p == 'X');
    }
    return t;
}

// One template per thing class, indexed by class id - 2.
const std::vector<ShapeTemplate>& shape_templates() {
    static const std::vector<ShapeTemplate> kTemplates = {
        from_pattern({"XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX",
                      "XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX",
                      "XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX", "XXXXXXXXXXXX"}),
        from_pattern({"....XXXXX....", "....XXXXX....", "....XXXXX....", "....XXXXX....",
                      "XXXXXXXXXXXXX", "XXXXXXXXXXXXX", "XXXXXXXXXXXXX", "XXXXXXXXXXXXX",
                      "XXXXXXXXXXXXX", "....XXXXX....", "....XXXXX....", "....XXXXX....",
                      "....XXXXX...."}),
        from_pattern({"......X......", ".....XXX.....", "....XXXXX....", "...XXXXXXX...",
                      "..XXXXXXXXX..", ".XXXXXXXXXXX.", "XXXXXXXXXXXXX", ".XXXXXXXXXXX.",
                      "..XXXXXXXXX..", "...XXXXXXX...", "....XXXXX....", ".....XXX.....",
                      "......X......"}),
        from_pattern({"XXXXX", "XXXXX", "XXXXX", "XXXXX", "XXXXX", "XXXXX", "XXXXX", "XXXXX",
                      "XXXXX", "XXXXX", "XXXXX", "XXXXX"}),
        from_pattern({"XXXXXXXXXXX", "XXXXXXXXXXX", "XXXXXXXXXXX", "XXXXXXXXXXX",
                      "....XXX....", "....XXX....", "....XXX....", "....XXX....",
                      "....XXX....", "....XXX....", "....XXX...."}),
        from_pattern({"XXXXXXXXX", "XXXXXXXXX", "XXXXXXXXX", "XXXXXXXXX", "XXXXXXXXX",
                      "XXXXXXXXX", "XXXXXXXXX", "XXXXXXXXX", "XXXXXXXXX"}),
    };
    return kTemplates;
}

struct Entity {
    std::uint16_t id;
    int class_id;
    int vx, vy;  // image-space velocity in pixels/frame
    // band geometry (entity 1)
    int band_y0 = 0, band_h = 0;
    // shape geometry
    int x0 = 0, y0 = 0;
    const ShapeTemplate* tpl = nullptr;
};

double texture(std::uint64_t seed, int u, int v, int class_id) {
    std::uint64_t h = splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
                                                   static_cast<std::uint32_t>(v)) ^
                                 splitmix64(0x7e11ull + class_id));
    return (static_cast<double>(h >> 11) * 0x1.0p-53) * 2.0 - 1.0;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
}

int sample_class(std::mt19937_64& rng, const std::vector<double>& weights,
                 const std::vector<int>& thing_classes) {
    double total = 0.0;
    for (int c : thing_classes) total += weights[c];
    double r = uniform01(rng) * total;
    for (int c : thing_classes) {
        r -= weights[c];
        if (r < 0.0) return c;
    }
    return thing_classes.back();
}

}  // namespace

WorldSpec default_world() {
    WorldSpec spec;
    spec.min_objects = 14;
    spec.max_objects = 20;
    spec.rarity_weights = {0, 0, 1.0, 1.0, 0.9, 0.9, 0.20, 0.15};
    return spec;
}

DomainStyle default_source_style() {
    DomainStyle s;
    s.palette = {
        {0.10, 0.11, 0.12},  // background
        {0.45, 0.42, 0.38},  // road band
        {0.85, 0.15, 0.12},  // shape: red box
        {0.12, 0.75, 0.15},  // shape: green plus
        {0.15, 0.30, 0.85},  // shape: blue diamond
        {0.90, 0.82, 0.15},  // post: yellow bar
        {0.92, 0.93, 0.95},  // post: white tee
        {0.15, 0.78, 0.80},  // post: cyan block
    };
    s.noise_sigma = 0.02;
    s.gamma = 1.0;
    return s;
}

DomainStyle default_target_style() {
    // Common classes shift noticeably (the adaptation headroom); the two rare
    // posts keep almost their source colors, so their difficulty comes from
    // rarity and biased pseudo-labels rather than the style gap.
    DomainStyle s;
    s.palette = {
        {0.225, 0.212, 0.264},
        {0.513, 0.492, 0.464},
        {0.908, 0.594, 0.245},
        {0.245, 0.828, 0.587},
        {0.240, 0.340, 0.620},
        {0.937, 0.911, 0.646},
        {0.916, 0.930, 0.958},
        {0.204, 0.782, 0.843},
    };
    s.noise_sigma = 0.10;
    s.gamma = 1.45;
    return s;
}

std::vector<ClassTraits> class_categories(const WorldSpec& spec) {
    std::vector<ClassTraits> cats(spec.num_classes);
    for (int c = 0; c < spec.num_classes; ++c) {
        if (c <= 1) {
            cats[c] = ClassTraits{false, false};
        } else if (c <= 4) {
            cats[c] = ClassTraits{true, true};
        } else {
            cats[c] = ClassTraits{true, false};
        }
    }
    return cats;
}

ClipSample generate_clip(const WorldSpec& spec, const DomainStyle& style, std::uint64_t clip_index) {
    require(spec.clip_length >= 2, "generate_clip: clip_length must be at least 2");
    require(spec.num_classes >= 3 && spec.num_classes <= 8, "generate_clip: 3..8 classes supported");
    require(static_cast<int>(style.palette.size()) >= spec.num_classes,
            "generate_clip: palette too small");
    require(style.gamma > 0.0 && style.noise_sigma >= 0.0, "generate_clip: bad style");

    const int h = spec.height, w = spec.width, T = spec.clip_length;
    std::vector<int> thing_classes;
    for (int c = 2; c < spec.num_classes; ++c) thing_classes.push_back(c);
    const auto& templates = shape_templates();
    for (int c : thing_classes) {
        const ShapeTemplate& tpl = templates[(c - 2) % templates.size()];
        if (tpl.height > h || tpl.width > w) {
            throw std::invalid_argument("generate_clip: canvas too small for largest object template");
        }
    }
    std::vector<double> weights = spec.rarity_weights;
    weights.resize(spec.num_classes, 1.0);

    auto geo_rng = make_rng(spec.seed, clip_index * 2 + 0);
    const auto cats = class_categories(spec);

    // Scene setup. Entity 0 is the background, entity 1 the road band,
    // 2.. are spawned shapes; spawn order doubles as z-order.
    std::vector<Entity> entities;
    entities.push_back(Entity{0, 0, spec.scroll_dx, spec.scroll_dy});
    Entity band{1, 1, spec.scroll_dx, spec.scroll_dy};
    band.band_h = uniform_int(geo_rng, std::max(6, h / 5), std::max(7, h / 3));
    band.band_y0 = uniform_int(geo_rng, h / 8, h - h / 8 - band.band_h);
    entities.push_back(band);

    const int n_objects = uniform_int(geo_rng, spec.min_objects, spec.max_objects);
    for (int i = 0; i < n_objects; ++i) {
        Entity e{static_cast<std::uint16_t>(2 + i), 0, 0, 0};
        e.class_id = sample_class(geo_rng, weights, thing_classes);
        e.tpl = &templates[(e.class_id - 2) % templates.size()];
        e.x0 = uniform_int(geo_rng, 0, w - e.tpl->width);
        e.y0 = uniform_int(geo_rng, 0, h - e.tpl->height);
        if (cats[e.class_id].is_movable) {
            e.vx = uniform_int(geo_rng, -spec.object_speed_max, spec.object_speed_max);
            e.vy = uniform_int(geo_rng, -spec.object_speed_max, spec.object_speed_max);
        } else {
            e.vx = spec.scroll_dx;
            e.vy = spec.scroll_dy;
        }
        entities.push_back(e);
    }

    ClipSample clip;
    clip.frames.reserve(T);
    clip.labels.reserve(T);
    clip.flows.reserve(T - 1);
    clip.entities.reserve(T);

    std::vector<std::uint16_t> owner(static_cast<size_t>(h) * w);
    for (int t = 0; t < T; ++t) {
        // Paint the owner map in z-order.
        std::fill(owner.begin(), owner.end(), std::uint16_t{0});
        {
            const Entity& b = entities[1];
            const int y0 = b.band_y0 + t * b.vy;
            for (int y = std::max(0, y0); y < std::min(h, y0 + b.band_h); ++y) {
                std::fill(owner.begin() + static_cast<size_t>(y) * w,
                          owner.begin() + static_cast<size_t>(y + 1) * w, b.id);
            }
        }
        for (size_t ei = 2; ei < entities.size(); ++ei) {
            const Entity& e = entities[ei];
            const int ox = e.x0 + t * e.vx;
            const int oy = e.y0 + t * e.vy;
            for (int ty = 0; ty < e.tpl->height; ++ty) {
                const int y = oy + ty;
                if (y < 0 || y >= h) continue;
                for (int tx = 0; tx < e.tpl->width; ++tx) {
                    const int x = ox + tx;
                    if (x < 0 || x >= w) continue;
                    if (e.tpl->cells[static_cast<size_t>(ty) * e.tpl->width + tx]) {
                        owner[static_cast<size_t>(y) * w + x] = e.id;
                    }
                }
            }
        }

        LabelMap label(h, w, spec.num_classes);
        for (size_t p = 0; p < owner.size(); ++p) {
            label.data[p] = static_cast<std::uint8_t>(entities[owner[p]].class_id);
        }

        if (t >= 1) {
            FlowField flow(h, w);
            for (size_t p = 0; p < owner.size(); ++p) {
                const Entity& e = entities[owner[p]];
                flow.data[p * 2 + 0] = e.vx;
                flow.data[p * 2 + 1] = e.vy;
            }
            clip.flows.push_back(std::move(flow));
        }

        // Appearance: per-class base color, a texture pattern anchored to the
        // owning entity (so it translates exactly with the scene), gamma, and
        // per-frame sensor noise. Noise draws are independent of the style so
        // two styles over the same geometry differ in pixels only.
        auto noise_rng = make_rng(derive_seed(spec.seed, 0xA015Eull + clip_index), t);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Frame frame(h, w, 3);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const Entity& e = entities[owner[static_cast<size_t>(y) * w + x]];
                const int u = x - t * e.vx;
                const int v = y - t * e.vy;
                const double tex = texture(spec.seed, u, v, e.class_id);
                const auto& base = style.palette[e.class_id];
                for (int ch = 0; ch < 3; ++ch) {
                    double val = base[ch] * (1.0 + 0.10 * tex);
                    val = std::clamp(val, 0.0, 1.0);
                    val = std::pow(val, style.gamma);
                    val += style.noise_sigma * gauss(noise_rng);
                    frame.at(y, x, ch) = std::clamp(val, 0.0, 1.0);
                }
            }
        }

        clip.entities.emplace_back(owner.begin(), owner.end());
        clip.labels.push_back(std::move(label));
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

void generate_dataset(const WorldSpec& spec, const DomainStyle& source_style,
                      const DomainStyle& target_style, int n_source, int n_target,
                      double eval_fraction, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "source");
    fs::create_directories(root / "target");

    auto write_clip = [&](const fs::path& dir, const ClipSample& clip) {
        fs::create_directories(dir);
        char name[32];
        for (int t = 0; t < static_cast<int>(clip.frames.size()); ++t) {
            std::snprintf(name, sizeof(name), "frame_%02d.cmt", t);
            save_frame(dir / name, clip.frames[t]);
            std::snprintf(name, sizeof(name), "label_%02d.cmt", t);
            save_label(dir / name, clip.labels[t]);
            if (t >= 1) {
                std::snprintf(name, sizeof(name), "flow_%02d.cmt", t);
                save_flow(dir / name, clip.flows[t - 1]);
            }
        }
    };

    for (int i = 0; i < n_source; ++i) {
        write_clip(root / "source" / clip_dir_name(i), generate_clip(spec, source_style, i));
    }
    for (int i = 0; i < n_target; ++i) {
        write_clip(root / "target" / clip_dir_name(i),
                   generate_clip(spec, target_style, kTargetClipIndexOffset + i));
    }

    DatasetMeta meta;
    meta.height = spec.height;
    meta.width = spec.width;
    meta.num_classes = spec.num_classes;
    meta.num_frames = spec.clip_length;
    meta.seed = spec.seed;
    meta.categories = class_categories(spec);
    meta.n_source = n_source;
    meta.n_target = n_target;
    write_dataset_meta(root, meta);

    const int n_eval = static_cast<int>(std::ceil(eval_fraction * n_target));
    std::vector<int> eval_clips;
    for (int i = n_target - n_eval; i < n_target; ++i) eval_clips.push_back(i);
    write_dataset_manifest(root, eval_clips);
}

}  // namespace davss
