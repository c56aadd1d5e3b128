#include "davss/fatc.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "davss/tensor.hpp"

namespace davss {

void FeatureBank::push(const FeatureCentroid& centroid) {
    require(centroid.class_id >= 0 && centroid.class_id < num_classes(), "bank_push: class id out of range");
    require(static_cast<int>(centroid.values.size()) == dim_, "bank_push: centroid dimension mismatch");
    auto& q = queues_[centroid.class_id];
    q.push_back(centroid.values);
    if (q.size() > capacity_) q.pop_front();
}

size_t FeatureBank::total_size() const {
    size_t n = 0;
    for (const auto& q : queues_) n += q.size();
    return n;
}

void FeatureBank::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["num_classes"] = num_classes();
    meta["dim"] = dim_;
    meta["capacity"] = capacity_;
    std::vector<size_t> sizes;
    for (int c = 0; c < num_classes(); ++c) {
        sizes.push_back(queues_[c].size());
        if (queues_[c].empty()) continue;
        std::vector<double> flat;
        flat.reserve(queues_[c].size() * dim_);
        for (const auto& v : queues_[c]) flat.insert(flat.end(), v.begin(), v.end());
        char name[32];
        std::snprintf(name, sizeof(name), "class_%02d.cmt", c);
        save_f32(dir / name, {static_cast<std::uint32_t>(queues_[c].size()), static_cast<std::uint32_t>(dim_)},
                 flat);
    }
    meta["sizes"] = sizes;
    std::ofstream out(dir / "bank.json");
    out << meta.dump(2) << "\n";
}

FeatureBank FeatureBank::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bank.json");
    if (!in) throw std::runtime_error("FeatureBank::load: missing " + (dir / "bank.json").string());
    nlohmann::json meta = nlohmann::json::parse(in);
    FeatureBank bank(meta.at("num_classes").get<int>(), meta.at("dim").get<int>(),
                     meta.at("capacity").get<size_t>());
    auto sizes = meta.at("sizes").get<std::vector<size_t>>();
    for (int c = 0; c < bank.num_classes(); ++c) {
        if (sizes[c] == 0) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "class_%02d.cmt", c);
        auto [dims, values] = load_f32(dir / name);
        for (size_t i = 0; i < sizes[c]; ++i) {
            std::vector<double> v(values.begin() + i * bank.dim_, values.begin() + (i + 1) * bank.dim_);
            bank.queues_[c].push_back(std::move(v));
        }
    }
    return bank;
}

std::vector<FeatureCentroid> compute_centroids(const FeatureMap& features,
                                               const std::vector<BinaryMap>& instance_masks,
                                               int class_id) {
    std::vector<FeatureCentroid> out;
    const int d = features.dim;
    for (size_t k = 0; k < instance_masks.size(); ++k) {
        const BinaryMap& mask = instance_masks[k];
        require(mask.height == features.height && mask.width == features.width,
                "compute_centroids: mask not on the feature grid");
        std::vector<double> sum(d, 0.0);
        size_t area = 0;
        for (size_t p = 0; p < mask.data.size(); ++p) {
            if (!mask.data[p]) continue;
            ++area;
            const double* f = features.data.data() + p * d;
            for (int i = 0; i < d; ++i) sum[i] += f[i];
        }
        if (area == 0) continue;
        for (int i = 0; i < d; ++i) sum[i] /= static_cast<double>(area);
        out.push_back(FeatureCentroid{class_id, static_cast<int>(k), std::move(sum)});
    }
    return out;
}

BinaryMap source_valid_mask(const LabelMap& pred, const LabelMap& truth, int class_id) {
    require(pred.height == truth.height && pred.width == truth.width, "source_valid_mask: shape mismatch");
    BinaryMap v(pred.height, pred.width);
    for (size_t i = 0; i < v.data.size(); ++i) {
        v.data[i] = pred.data[i] == class_id && truth.data[i] == class_id;
    }
    return v;
}

AlignmentResult feature_alignment_loss(const std::vector<FeatureCentroid>& mixed_centroids,
                                       const FeatureBank& bank, ClassReduction reduction) {
    AlignmentResult res;
    res.centroid_grads.assign(mixed_centroids.size(), {});

    // Count centroids per class; k in Eq-style normalization is the
    // per-class instance count.
    std::vector<int> per_class(bank.num_classes(), 0);
    for (const auto& c : mixed_centroids) {
        require(c.class_id >= 0 && c.class_id < bank.num_classes(), "alignment: class id out of range");
        require(static_cast<int>(c.values.size()) == bank.dim(), "alignment: centroid dimension mismatch");
        ++per_class[c.class_id];
    }

    int classes_counted = 0;
    std::vector<std::uint8_t> seen(bank.num_classes(), 0);
    for (const auto& c : mixed_centroids) {
        if (!seen[c.class_id] && bank.size(c.class_id) > 0) {
            seen[c.class_id] = 1;
            ++classes_counted;
        }
    }
    const double class_scale =
        (reduction == ClassReduction::Mean && classes_counted > 0) ? 1.0 / classes_counted : 1.0;

    for (size_t i = 0; i < mixed_centroids.size(); ++i) {
        const FeatureCentroid& c = mixed_centroids[i];
        const auto& entries = bank.entries(c.class_id);
        res.centroid_grads[i].assign(c.values.size(), 0.0);
        if (entries.empty()) continue;

        double best = std::numeric_limits<double>::infinity();
        size_t best_j = 0;
        for (size_t j = 0; j < entries.size(); ++j) {
            double dist = 0.0;
            for (size_t k = 0; k < c.values.size(); ++k) dist += std::abs(c.values[k] - entries[j][k]);
            if (dist < best) {
                best = dist;
                best_j = j;
            }
        }

        const double inv_k = 1.0 / per_class[c.class_id];
        res.loss += class_scale * best * inv_k;
        const auto& nearest = entries[best_j];
        for (size_t k = 0; k < c.values.size(); ++k) {
            const double diff = c.values[k] - nearest[k];
            const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            res.centroid_grads[i][k] = class_scale * s * inv_k;
        }
    }
    return res;
}

void scatter_centroid_grads(const std::vector<BinaryMap>& instance_masks,
                            const std::vector<std::vector<double>>& centroid_grads,
                            double scale, FeatureMap& grad_features) {
    require(instance_masks.size() == centroid_grads.size(), "scatter: mask/grad count mismatch");
    const int d = grad_features.dim;
    for (size_t i = 0; i < instance_masks.size(); ++i) {
        const BinaryMap& mask = instance_masks[i];
        const size_t area = mask.count();
        if (area == 0 || centroid_grads[i].empty()) continue;
        const double w = scale / static_cast<double>(area);
        for (size_t p = 0; p < mask.data.size(); ++p) {
            if (!mask.data[p]) continue;
            double* g = grad_features.data.data() + p * d;
            for (int k = 0; k < d; ++k) g[k] += w * centroid_grads[i][k];
        }
    }
}

}  // namespace davss
