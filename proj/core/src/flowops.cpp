#include "davss/flowops.hpp"

#include <cmath>
#include <queue>

namespace davss {

namespace {

inline bool in_unit_range(double v, int limit) { return v >= 0.0 && v <= static_cast<double>(limit - 1); }

}  // namespace

WarpedFeatures warp_backward_bilinear(const FeatureMap& map, const FlowField& flow) {
    require(map.height == flow.height && map.width == flow.width,
            "warp_backward_bilinear: map/flow shape mismatch");
    const int h = map.height, w = map.width, d = map.dim;
    WarpedFeatures out{FeatureMap(h, w, d), BinaryMap(h, w)};

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x - flow.dx(y, x);
            const double sy = y - flow.dy(y, x);
            if (!in_unit_range(sx, w) || !in_unit_range(sy, h)) continue;
            out.validity.at(y, x) = 1;

            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;

            const double w00 = (1.0 - fx) * (1.0 - fy);
            const double w01 = fx * (1.0 - fy);
            const double w10 = (1.0 - fx) * fy;
            const double w11 = fx * fy;

            const double* p00 = map.cell(y0, x0);
            const double* p01 = map.cell(y0, x1);
            const double* p10 = map.cell(y1, x0);
            const double* p11 = map.cell(y1, x1);
            double* dst = out.warped.cell(y, x);
            for (int k = 0; k < d; ++k) {
                dst[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
            }
        }
    }
    return out;
}

FeatureMap warp_backward_bilinear_adjoint(const FeatureMap& grad_warped, const FlowField& flow) {
    require(grad_warped.height == flow.height && grad_warped.width == flow.width,
            "warp_backward_bilinear_adjoint: shape mismatch");
    const int h = grad_warped.height, w = grad_warped.width, d = grad_warped.dim;
    FeatureMap grad_src(h, w, d);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x - flow.dx(y, x);
            const double sy = y - flow.dy(y, x);
            if (!in_unit_range(sx, w) || !in_unit_range(sy, h)) continue;

            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1);
            const int y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;

            const double w00 = (1.0 - fx) * (1.0 - fy);
            const double w01 = fx * (1.0 - fy);
            const double w10 = (1.0 - fx) * fy;
            const double w11 = fx * fy;

            const double* g = grad_warped.cell(y, x);
            double* q00 = grad_src.cell(y0, x0);
            double* q01 = grad_src.cell(y0, x1);
            double* q10 = grad_src.cell(y1, x0);
            double* q11 = grad_src.cell(y1, x1);
            for (int k = 0; k < d; ++k) {
                q00[k] += w00 * g[k];
                q01[k] += w01 * g[k];
                q10[k] += w10 * g[k];
                q11[k] += w11 * g[k];
            }
        }
    }
    return grad_src;
}

WarpedLabels warp_backward_nearest(const LabelMap& map, const FlowField& flow) {
    require(map.height == flow.height && map.width == flow.width,
            "warp_backward_nearest: map/flow shape mismatch");
    const int h = map.height, w = map.width;
    WarpedLabels out{LabelMap(h, w, map.num_classes), BinaryMap(h, w)};
    std::fill(out.warped.data.begin(), out.warped.data.end(), std::uint8_t{0});

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double sx = x - flow.dx(y, x);
            const double sy = y - flow.dy(y, x);
            if (!in_unit_range(sx, w) || !in_unit_range(sy, h)) continue;
            out.validity.at(y, x) = 1;
            const int nx = static_cast<int>(std::lround(sx));
            const int ny = static_cast<int>(std::lround(sy));
            out.warped.at(y, x) = map.at(ny, nx);
        }
    }
    return out;
}

FlowField resample_flow(const FlowField& flow, int fheight, int fwidth) {
    require(fheight > 0 && fwidth > 0, "resample_flow: empty output grid");
    if (fheight == flow.height && fwidth == flow.width) return flow;
    require(flow.height % fheight == 0 && flow.width % fwidth == 0,
            "resample_flow: non-integer grid ratio");
    const int ry = flow.height / fheight;
    const int rx = flow.width / fwidth;

    FlowField out(fheight, fwidth);
    for (int y = 0; y < fheight; ++y) {
        for (int x = 0; x < fwidth; ++x) {
            // Nearest source pixel is the center of the block; displacements
            // switch to coarse-grid units.
            const int sy = y * ry + ry / 2;
            const int sx = x * rx + rx / 2;
            out.dx(y, x) = flow.dx(sy, sx) / rx;
            out.dy(y, x) = flow.dy(sy, sx) / ry;
        }
    }
    return out;
}

BinaryMap consensus_mask(const LabelMap& pred_t, const WarpedLabels& warped_prev, int class_id) {
    require(pred_t.height == warped_prev.warped.height && pred_t.width == warped_prev.warped.width,
            "consensus_mask: shape mismatch");
    BinaryMap v(pred_t.height, pred_t.width);
    const size_t n = pred_t.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        v.data[i] = pred_t.data[i] == class_id && warped_prev.warped.data[i] == class_id &&
                    warped_prev.validity.data[i];
    }
    return v;
}

std::vector<BinaryMap> split_instances(const BinaryMap& mask, ClassCategory category) {
    constexpr size_t kMinComponentPixels = 2;
    std::vector<BinaryMap> out;
    if (category == ClassCategory::Stuff) {
        if (mask.count() > 0) out.push_back(mask);
        return out;
    }

    const int h = mask.height, w = mask.width;
    std::vector<std::uint8_t> visited(mask.data.size(), 0);
    std::queue<int> frontier;

    for (int start = 0; start < static_cast<int>(mask.data.size()); ++start) {
        if (!mask.data[start] || visited[start]) continue;

        BinaryMap comp(h, w);
        size_t comp_size = 0;
        visited[start] = 1;
        frontier.push(start);
        while (!frontier.empty()) {
            const int i = frontier.front();
            frontier.pop();
            comp.data[i] = 1;
            ++comp_size;
            const int y = i / w, x = i % w;
            const int neigh[4] = {i - w, i + w, i - 1, i + 1};
            const bool ok[4] = {y > 0, y < h - 1, x > 0, x < w - 1};
            for (int k = 0; k < 4; ++k) {
                if (ok[k] && mask.data[neigh[k]] && !visited[neigh[k]]) {
                    visited[neigh[k]] = 1;
                    frontier.push(neigh[k]);
                }
            }
        }
        if (comp_size >= kMinComponentPixels) out.push_back(std::move(comp));
    }
    return out;  // scan order of `start` = ordering by smallest linear index
}

double flow_violation_rate(const LabelMap& map_prev, const LabelMap& map_cur, const FlowField& flow) {
    require(map_prev.height == map_cur.height && map_prev.width == map_cur.width,
            "flow_violation_rate: shape mismatch");
    WarpedLabels warped = warp_backward_nearest(map_prev, flow);
    size_t valid = 0, violated = 0;
    for (size_t i = 0; i < map_cur.data.size(); ++i) {
        if (!warped.validity.data[i]) continue;
        ++valid;
        violated += warped.warped.data[i] != map_cur.data[i];
    }
    return valid == 0 ? 0.0 : static_cast<double>(violated) / static_cast<double>(valid);
}

}  // namespace davss
