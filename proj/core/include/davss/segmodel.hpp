#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "davss/flowops.hpp"
#include "davss/types.hpp"

namespace davss {

struct ConvLayer {
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 1;                 // 1 or 3, same padding
    std::vector<double> weights;   // [ky][kx][ic][oc]
    std::vector<double> bias;      // [oc]
};

/// Weight-shared two-branch segmentation net: two 3x3 conv+ReLU stages give
/// D-dim per-pixel features, a 1x1 classifier gives per-frame class scores,
/// and a 1x1 fusion layer combines the current scores with the
/// backward-warped previous-frame scores into the clip-level prediction.
struct ModelParams {
    int num_classes = 0;
    int feature_dim = 0;
    ConvLayer conv1;       // 3x3, 3 -> D
    ConvLayer conv2;       // 3x3, D -> D
    ConvLayer classifier;  // 1x1, D -> C
    ConvLayer fusion;      // 1x1, 2C -> C
};

ModelParams init_params(int num_classes, int feature_dim, std::uint64_t seed);

/// Visits every parameter tensor in a fixed order (checkpoint + optimizer
/// layout contract).
void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, std::vector<double>&,
                                              std::vector<std::uint32_t>)>& fn);
void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const std::vector<double>&,
                                              std::vector<std::uint32_t>)>& fn);

ModelParams zeros_like(const ModelParams& p);

struct ForwardTrace {
    int height = 0, width = 0;
    FeatureMap input[2];     // frame pixels as 3-channel maps (0 = t-tau, 1 = t)
    FeatureMap pre1[2];
    FeatureMap act1[2];
    FeatureMap pre2[2];
    FeatureMap features[2];  // f_{t-tau}, f_t
    FeatureMap logits[2];    // per-frame class scores
    WarpedFeatures warped_prev_logits;
    FeatureMap fused;        // clip-level scores at time t
    FlowField flow;
};

ForwardTrace forward(const ModelParams& params, const Frame& frame_prev, const Frame& frame_cur,
                     const FlowField& flow);

/// Exact reverse-mode gradients of `forward`. Accepts the loss gradient on
/// the fused scores plus an optional gradient injected directly on the
/// current-frame features f_t (the feature-alignment path). Flow is treated
/// as a constant. Gradients accumulate into `grads`.
void backward(const ModelParams& params, const ForwardTrace& trace, const FeatureMap& grad_fused,
              const FeatureMap* grad_features_cur, ModelParams& grads);

struct CrossEntropyResult {
    double loss = 0.0;
    FeatureMap grad;  // w.r.t. the logits handed in
};

/// Mean over non-IGNORE pixels of -log softmax at the true class. An
/// all-IGNORE label gives loss 0 with a zero gradient.
CrossEntropyResult cross_entropy_loss(const FeatureMap& logits, const LabelMap& label);

LabelMap argmax_map(const FeatureMap& logits, int num_classes);

/// Argmax class plus per-pixel max softmax probability.
std::pair<LabelMap, std::vector<double>> predict_with_confidence(const FeatureMap& logits,
                                                                 int num_classes);

struct OptimConfig {
    double lr0 = 5e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double poly_power = 0.9;
    long max_iter = 2000;
};

struct SgdState {
    std::vector<std::vector<double>> velocity;  // one entry per tensor, for_each_tensor order
};

double poly_lr(const OptimConfig& cfg, long iter);
void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state, long iter,
              const OptimConfig& cfg);

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, long iteration);
std::pair<ModelParams, long> load_checkpoint(const std::filesystem::path& dir);

}  // namespace davss
