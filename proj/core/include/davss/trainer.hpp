#pragma once

#include <filesystem>
#include <vector>

#include "davss/dataset.hpp"
#include "davss/fatc.hpp"
#include "davss/mixer.hpp"
#include "davss/pseudo.hpp"
#include "davss/segmodel.hpp"

namespace davss {

enum class MixerKind { Cmom, Dacs };

struct TrainConfig {
    OptimConfig optim;                 // lr0 5e-4, momentum 0.9, wd 5e-4, poly 0.9
    double lambda_mix = 1.0;           // weight of the mixed-domain segmentation loss
    double lambda_feature = 0.01;      // weight of the feature alignment loss
    MixConfig mix;
    PseudoPolicyConfig pseudo;
    size_t bank_capacity = 50;
    int feature_dim = 16;
    std::uint64_t seed = 0;
    bool enable_cmom = true;
    bool enable_fatc = true;
    MixerKind mixer_kind = MixerKind::Cmom;
    ClassReduction fatc_class_reduction = ClassReduction::Mean;
};

struct StepReport {
    long iteration = 0;
    double loss_source = 0.0;
    double loss_self = 0.0;
    double loss_feature = 0.0;
    double total = 0.0;  // loss_source + lambda_mix*loss_self + lambda_feature*loss_feature
    double lr = 0.0;
    double kept_pseudo_fraction = 0.0;
    double time_mix = 0.0, time_forward = 0.0, time_backward = 0.0, time_fatc = 0.0;  // seconds
};

struct TrainState {
    TrainConfig cfg;
    ModelParams params;
    SgdState sgd;
    FeatureBank bank;
    std::vector<ClassTraits> categories;
};

TrainState make_train_state(const TrainConfig& cfg, const ModelParams& init,
                            const std::vector<ClassTraits>& categories);

/// One optimization step over a source window and a target window: mix,
/// forward both domains, optional feature alignment against the bank, one
/// accumulated backward, one SGD update.
StepReport train_step(TrainState& state, long iter, const SourceWindow& source,
                      const TargetWindow& target, const LabelMap& target_pseudo_label_t);

/// Source-only pretraining for optim.max_iter / 4 iterations; stands in for
/// an externally pretrained initialization. Saves a checkpoint under
/// checkpoint_dir.
ModelParams pretrain_source_only(const TrainConfig& cfg, const Dataset& dataset,
                                 const std::filesystem::path& checkpoint_dir);

struct SelfTrainResult {
    ModelParams params;
    std::vector<StepReport> reports;
};

/// The main self-training loop over shuffled source/target clip pairs.
/// Requires pregenerated pseudo-labels. Writes train_log.csv (deterministic
/// columns), timings.csv, the final checkpoint and the final feature bank
/// under run_dir.
SelfTrainResult run_self_training(const TrainConfig& cfg, const Dataset& dataset,
                                  const ModelParams& init,
                                  const std::filesystem::path& pseudo_dir,
                                  const std::filesystem::path& run_dir);

void write_train_log(const std::vector<StepReport>& reports, const std::filesystem::path& csv_path);
void write_timings(const std::vector<StepReport>& reports, const std::filesystem::path& csv_path);

}  // namespace davss
