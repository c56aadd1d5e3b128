#include "davss/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "davss/tensor.hpp"

namespace davss {

namespace {

std::string plabel_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "plabel_%02d.cmt", t);
    return buf;
}

}  // namespace

std::vector<double> init_thresholds(const PseudoPolicyConfig& cfg, int num_classes) {
    require(cfg.alpha > 0.0 && cfg.alpha <= 1.0, "pseudo: alpha outside (0,1]");
    require(cfg.beta > 0.0 && cfg.beta <= 1.0, "pseudo: beta outside (0,1]");
    require(cfg.gamma >= 0, "pseudo: gamma negative");
    return std::vector<double>(num_classes, cfg.init_threshold);
}

std::vector<double> update_thresholds(const std::vector<double>& state,
                                      const std::vector<double>& confidences, const LabelMap& pred,
                                      const PseudoPolicyConfig& cfg) {
    require(confidences.size() == pred.data.size(), "update_thresholds: shape mismatch");
    std::vector<std::vector<double>> per_class(state.size());
    for (size_t p = 0; p < pred.data.size(); ++p) {
        const std::uint8_t c = pred.data[p];
        if (c != kIgnoreLabel && c < state.size()) per_class[c].push_back(confidences[p]);
    }

    std::vector<double> out = state;
    for (size_t c = 0; c < state.size(); ++c) {
        auto& conf = per_class[c];
        const size_t n = conf.size();
        if (n < static_cast<size_t>(cfg.gamma) || n == 0) continue;
        const size_t rank = static_cast<size_t>(std::ceil(cfg.beta * static_cast<double>(n)));  // 1-based
        std::sort(conf.begin(), conf.end(), std::greater<double>());
        const double estimate = conf[rank - 1];
        out[c] = (1.0 - cfg.alpha) * state[c] + cfg.alpha * estimate;
    }
    return out;
}

PseudoLabel generate_pseudo_label(const std::vector<double>& confidences, const LabelMap& pred,
                                  const std::vector<double>& thresholds,
                                  const PseudoPolicyConfig& cfg) {
    (void)cfg;
    require(confidences.size() == pred.data.size(), "generate_pseudo_label: shape mismatch");
    PseudoLabel out;
    out.label = pred;
    out.per_class_thresholds = thresholds;
    size_t kept = 0;
    for (size_t p = 0; p < pred.data.size(); ++p) {
        const std::uint8_t c = pred.data[p];
        if (c == kIgnoreLabel || c >= thresholds.size()) {
            out.label.data[p] = kIgnoreLabel;
            continue;
        }
        const double bar = std::min(thresholds[c], 0.999);
        if (confidences[p] >= bar) {
            ++kept;
        } else {
            out.label.data[p] = kIgnoreLabel;
        }
    }
    out.kept_fraction = pred.data.empty() ? 0.0 : static_cast<double>(kept) / pred.data.size();
    return out;
}

void generate_pseudo_labels(const Dataset& dataset, const ModelParams& params,
                            const PseudoPolicyConfig& cfg, const std::filesystem::path& out_dir) {
    const auto& meta = dataset.meta();
    const int T = meta.num_frames;
    std::vector<double> thresholds = init_thresholds(cfg, meta.num_classes);

    auto window_prediction = [&](int clip, int t) {
        Frame prev = dataset.frame(Domain::Target, clip, t - 1);
        Frame cur = dataset.frame(Domain::Target, clip, t);
        FlowField flow = dataset.flow(Domain::Target, clip, t);
        ForwardTrace trace = forward(params, prev, cur, flow);
        return predict_with_confidence(trace.fused, meta.num_classes);
    };

    // Pass 1: fit thresholds over the training split in clip order.
    for (int clip : dataset.target_train_clips()) {
        for (int t = 1; t < T; ++t) {
            auto [pred, conf] = window_prediction(clip, t);
            thresholds = update_thresholds(thresholds, conf, pred, cfg);
        }
    }

    // Pass 2: emit labels with the frozen thresholds.
    std::filesystem::create_directories(out_dir);
    std::ofstream summary(out_dir / "summary.txt");
    summary << "per_class_thresholds:";
    for (double t : thresholds) summary << " " << t;
    summary << "\n";

    double kept_sum = 0.0;
    size_t kept_n = 0;
    for (int clip : dataset.target_train_clips()) {
        const auto clip_dir = out_dir / clip_dir_name(clip);
        std::filesystem::create_directories(clip_dir);
        for (int t = 1; t < T; ++t) {
            auto [pred, conf] = window_prediction(clip, t);
            PseudoLabel pl = generate_pseudo_label(conf, pred, thresholds, cfg);
            save_label(clip_dir / plabel_name(t), pl.label);
            summary << clip_dir_name(clip) << " t=" << t << " kept_fraction=" << pl.kept_fraction
                    << "\n";
            kept_sum += pl.kept_fraction;
            ++kept_n;
        }
    }
    summary << "mean_kept_fraction: " << (kept_n ? kept_sum / kept_n : 0.0) << "\n";
}

LabelMap load_pseudo_label(const std::filesystem::path& pseudo_dir, int clip, int t, int num_classes) {
    return load_label(pseudo_dir / clip_dir_name(clip) / plabel_name(t), num_classes);
}

bool pseudo_labels_present(const std::filesystem::path& pseudo_dir) {
    return std::filesystem::exists(pseudo_dir / "summary.txt");
}

}  // namespace davss
