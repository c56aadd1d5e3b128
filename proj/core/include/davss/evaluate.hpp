#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "davss/dataset.hpp"
#include "davss/segmodel.hpp"
#include "davss/trainer.hpp"

namespace davss {

/// Rows index ground truth, columns predictions; IGNORE pixels never enter.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::uint64_t> counts;  // row-major num_classes^2

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int nc) : num_classes(nc), counts(static_cast<size_t>(nc) * nc, 0) {}

    std::uint64_t& at(int truth, int pred) { return counts[static_cast<size_t>(truth) * num_classes + pred]; }
    std::uint64_t at(int truth, int pred) const { return counts[static_cast<size_t>(truth) * num_classes + pred]; }
    std::uint64_t total() const;
    void merge(const ConfusionMatrix& other);
};

void accumulate(ConfusionMatrix& cm, const LabelMap& truth, const LabelMap& pred);

struct IouReport {
    std::vector<double> per_class;     // meaningful only where defined
    std::vector<bool> defined;         // false when the class never occurs
    double miou = 0.0;                 // mean over defined classes
};

IouReport iou_scores(const ConfusionMatrix& cm);

/// Fused-prediction mIoU of the model over the given clips of one domain.
/// Every labeled frame is scored; frame 0 uses a self-window with zero flow.
IouReport evaluate_clips(const ModelParams& params, const Dataset& dataset, Domain domain,
                         const std::vector<int>& clips);
ConfusionMatrix confusion_over_clips(const ModelParams& params, const Dataset& dataset,
                                     Domain domain, const std::vector<int>& clips);

enum class AblationSuite { LossFlags, MixRatio, MixContents, MixerKind };

AblationSuite parse_suite(const std::string& name);

struct AblationCell {
    std::string name;
    std::vector<double> mious;                 // one per seed
    double mean = 0.0;
    double stdev = 0.0;
    std::vector<std::pair<std::string, double>> extras;  // suite-specific metrics
};

struct AblationTable {
    std::string suite;
    std::vector<AblationCell> cells;
};

/// Runs one ablation grid. Pretraining and pseudo-labels are produced once
/// per seed and shared by every cell; each cell self-trains with its own
/// configuration and reports the target-eval mIoU.
AblationTable run_ablation(AblationSuite suite, const TrainConfig& base, const Dataset& dataset,
                           const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& work_dir);

void write_ablation_csv(const AblationTable& table, std::ostream& out);
std::string ablation_json(const AblationTable& table);

}  // namespace davss
