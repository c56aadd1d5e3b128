#include "davss/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "davss/tensor.hpp"

namespace davss {

namespace {

std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%02d.cmt", t);
    return buf;
}

std::string label_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "label_%02d.cmt", t);
    return buf;
}

std::string flow_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "flow_%02d.cmt", t);
    return buf;
}

}  // namespace

std::string clip_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%04d", index);
    return buf;
}

Dataset::Dataset(std::filesystem::path root) : root_(std::move(root)) {
    std::ifstream meta_in(root_ / "meta.json");
    if (!meta_in) throw std::runtime_error("Dataset: missing " + (root_ / "meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    meta_.height = meta.at("height").get<int>();
    meta_.width = meta.at("width").get<int>();
    meta_.num_classes = meta.at("num_classes").get<int>();
    meta_.num_frames = meta.at("num_frames").get<int>();
    meta_.seed = meta.at("seed").get<std::uint64_t>();
    meta_.n_source = meta.at("n_source").get<int>();
    meta_.n_target = meta.at("n_target").get<int>();
    for (const auto& c : meta.at("categories")) {
        meta_.categories.push_back(
            ClassTraits{c.at("thing").get<bool>(), c.at("movable").get<bool>()});
    }

    std::ifstream manifest_in(root_ / "manifest.json");
    if (!manifest_in) throw std::runtime_error("Dataset: missing " + (root_ / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(manifest_in);
    target_eval_ = manifest.at("target_eval_clips").get<std::vector<int>>();
    std::sort(target_eval_.begin(), target_eval_.end());
    for (int i = 0; i < meta_.n_target; ++i) {
        if (!std::binary_search(target_eval_.begin(), target_eval_.end(), i)) {
            target_train_.push_back(i);
        }
    }
}

std::filesystem::path Dataset::clip_dir(Domain d, int clip) const {
    return root_ / (d == Domain::Source ? "source" : "target") / clip_dir_name(clip);
}

std::filesystem::path Dataset::label_path(Domain d, int clip, int t) const {
    return clip_dir(d, clip) / label_name(t);
}

Frame Dataset::frame(Domain d, int clip, int t) const {
    return load_frame(clip_dir(d, clip) / frame_name(t));
}

FlowField Dataset::flow(Domain d, int clip, int t) const {
    require(t >= 1, "Dataset::flow: no flow into frame 0");
    return load_flow(clip_dir(d, clip) / flow_name(t));
}

LabelMap Dataset::label(Domain d, int clip, int t, LabelAccess access) const {
    if (d == Domain::Target) {
        if (access == LabelAccess::Training) {
            throw std::runtime_error("Dataset: target labels are firewalled from training code paths");
        }
        if (!is_target_eval_clip(clip)) {
            throw std::runtime_error("Dataset: target clip " + std::to_string(clip) +
                                     " is not in the eval split; its labels are firewalled");
        }
    }
    return load_label(clip_dir(d, clip) / label_name(t), meta_.num_classes);
}

bool Dataset::is_target_eval_clip(int clip) const {
    return std::binary_search(target_eval_.begin(), target_eval_.end(), clip);
}

void write_dataset_meta(const std::filesystem::path& root, const DatasetMeta& meta) {
    nlohmann::json j;
    j["height"] = meta.height;
    j["width"] = meta.width;
    j["num_classes"] = meta.num_classes;
    j["num_frames"] = meta.num_frames;
    j["seed"] = meta.seed;
    j["n_source"] = meta.n_source;
    j["n_target"] = meta.n_target;
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : meta.categories) {
        cats.push_back({{"thing", c.is_thing}, {"movable", c.is_movable}});
    }
    j["categories"] = cats;
    std::ofstream out(root / "meta.json");
    out << j.dump(2) << "\n";
}

void write_dataset_manifest(const std::filesystem::path& root, const std::vector<int>& target_eval_clips) {
    nlohmann::json j;
    j["target_eval_clips"] = target_eval_clips;
    j["firewalled"] = "labels of target clips outside target_eval_clips must not be read for training";
    std::ofstream out(root / "manifest.json");
    out << j.dump(2) << "\n";
}

}  // namespace davss
