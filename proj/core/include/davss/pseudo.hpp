#pragma once

#include <filesystem>
#include <vector>

#include "davss/dataset.hpp"
#include "davss/segmodel.hpp"
#include "davss/types.hpp"

namespace davss {

/// Class-wise adaptive thresholding policy. Per image, every class predicted
/// on at least `gamma` pixels updates its threshold toward the confidence at
/// the descending rank ceil(beta * n_c) with EMA rate alpha.
struct PseudoPolicyConfig {
    double alpha = 0.2;
    double beta = 0.9;
    int gamma = 8;
    double init_threshold = 0.9;
};

struct PseudoLabel {
    LabelMap label;  // IGNORE where rejected
    double kept_fraction = 0.0;
    std::vector<double> per_class_thresholds;
};

std::vector<double> init_thresholds(const PseudoPolicyConfig& cfg, int num_classes);

/// One EMA update from one image. `confidences` is the per-pixel max-softmax
/// map aligned with `pred`.
std::vector<double> update_thresholds(const std::vector<double>& state,
                                      const std::vector<double>& confidences, const LabelMap& pred,
                                      const PseudoPolicyConfig& cfg);

/// Keeps a pixel iff its confidence reaches min(threshold[pred], 0.999);
/// everything else becomes IGNORE.
PseudoLabel generate_pseudo_label(const std::vector<double>& confidences, const LabelMap& pred,
                                  const std::vector<double>& thresholds,
                                  const PseudoPolicyConfig& cfg);

/// Offline pass over the target training split: fits thresholds in clip
/// order with the given model, then emits root/pseudo/clip_NNNN/plabel_TT.cmt
/// for every window time t in [1, T-1], plus a text summary of thresholds
/// and kept fractions.
void generate_pseudo_labels(const Dataset& dataset, const ModelParams& params,
                            const PseudoPolicyConfig& cfg, const std::filesystem::path& out_dir);

/// Loader for the trainer; throws if the file is missing.
LabelMap load_pseudo_label(const std::filesystem::path& pseudo_dir, int clip, int t, int num_classes);
bool pseudo_labels_present(const std::filesystem::path& pseudo_dir);

}  // namespace davss
