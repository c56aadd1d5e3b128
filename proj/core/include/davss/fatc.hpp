#pragma once

#include <deque>
#include <filesystem>
#include <vector>

#include "davss/types.hpp"

namespace davss {

struct FeatureCentroid {
    int class_id = -1;
    int instance_index = 0;
    std::vector<double> values;
};

/// Per-class FIFO store of source-domain centroids. Pushing past capacity
/// evicts the oldest entry of that class.
class FeatureBank {
  public:
    FeatureBank() = default;
    FeatureBank(int num_classes, int dim, size_t capacity_per_class)
        : dim_(dim), capacity_(capacity_per_class), queues_(num_classes) {}

    void push(const FeatureCentroid& centroid);
    const std::deque<std::vector<double>>& entries(int class_id) const { return queues_.at(class_id); }
    size_t size(int class_id) const { return queues_.at(class_id).size(); }
    size_t total_size() const;
    int num_classes() const { return static_cast<int>(queues_.size()); }
    int dim() const { return dim_; }
    size_t capacity() const { return capacity_; }

    void save(const std::filesystem::path& dir) const;
    static FeatureBank load(const std::filesystem::path& dir);

  private:
    int dim_ = 0;
    size_t capacity_ = 50;
    std::vector<std::deque<std::vector<double>>> queues_;
};

enum class ClassReduction { Sum, Mean };

struct AlignmentResult {
    double loss = 0.0;
    // Gradient w.r.t. each input centroid, in input order.
    std::vector<std::vector<double>> centroid_grads;
};

/// Mask-weighted mean feature vector per instance mask. Empty masks produce
/// no centroid. Masks must live on the feature grid.
std::vector<FeatureCentroid> compute_centroids(const FeatureMap& features,
                                               const std::vector<BinaryMap>& instance_masks,
                                               int class_id);

/// 1 iff pred = c and truth = c; drops features from misclassified pixels.
BinaryMap source_valid_mask(const LabelMap& pred, const LabelMap& truth, int class_id);

/// L1 nearest-neighbor alignment of mixed-domain centroids against the bank.
/// Per class with k centroids: sum_i min_j |F_i - bank_j|_1 / k. Classes with
/// an empty bank contribute nothing. Gradient of each centroid is
/// sign(F_i - bank_j*) / k (sign(0) = 0), scaled by 1/#classes for Mean
/// reduction.
AlignmentResult feature_alignment_loss(const std::vector<FeatureCentroid>& mixed_centroids,
                                       const FeatureBank& bank,
                                       ClassReduction reduction = ClassReduction::Sum);

/// Pushes centroid gradients back onto the feature map through the masked
/// mean: grad_f(p) += mask_i(p)/|mask_i| * grad_centroid_i.
void scatter_centroid_grads(const std::vector<BinaryMap>& instance_masks,
                            const std::vector<std::vector<double>>& centroid_grads,
                            double scale, FeatureMap& grad_features);

}  // namespace davss
