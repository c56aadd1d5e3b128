#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "davss/mixer.hpp"
#include "davss/types.hpp"

namespace davss {

enum class Domain { Source, Target };

/// Why a label is being read. Training access to target labels is refused:
/// the benchmark writes target ground truth for evaluation only, and the
/// manifest marks it off-limits to the trainer.
enum class LabelAccess { Training, Evaluation };

struct DatasetMeta {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    int num_frames = 0;
    std::uint64_t seed = 0;
    std::vector<ClassTraits> categories;
    int n_source = 0;
    int n_target = 0;
};

std::string clip_dir_name(int index);

/// Read-side view of the on-disk benchmark:
/// root/{source|target}/clip_NNNN/{frame_TT,label_TT,flow_TT}.cmt
/// plus meta.json and manifest.json (the target eval split / firewall).
class Dataset {
  public:
    explicit Dataset(std::filesystem::path root);

    const DatasetMeta& meta() const { return meta_; }
    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path clip_dir(Domain d, int clip) const;
    std::filesystem::path label_path(Domain d, int clip, int t) const;
    Frame frame(Domain d, int clip, int t) const;
    FlowField flow(Domain d, int clip, int t) const;  // flow_{t-1 -> t}, t >= 1

    /// Labels go through the firewall: target labels are only served for
    /// Evaluation access on eval-split clips.
    LabelMap label(Domain d, int clip, int t, LabelAccess access) const;

    bool is_target_eval_clip(int clip) const;
    const std::vector<int>& target_eval_clips() const { return target_eval_; }
    const std::vector<int>& target_train_clips() const { return target_train_; }

  private:
    std::filesystem::path root_;
    DatasetMeta meta_;
    std::vector<int> target_eval_;
    std::vector<int> target_train_;
};

void write_dataset_meta(const std::filesystem::path& root, const DatasetMeta& meta);
void write_dataset_manifest(const std::filesystem::path& root, const std::vector<int>& target_eval_clips);

}  // namespace davss
