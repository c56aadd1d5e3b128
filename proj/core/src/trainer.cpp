#include "davss/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <cmath>
#include <fstream>

#include "davss/rng.hpp"

namespace davss {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double kept_fraction(const LabelMap& label) {
    if (label.data.empty()) return 0.0;
    size_t kept = 0;
    for (std::uint8_t v : label.data) kept += v != kIgnoreLabel;
    return static_cast<double>(kept) / label.data.size();
}

struct FatcOutcome {
    double loss = 0.0;
    FeatureMap grad_features;  // gradient on f_t of the mixed window, pre-lambda
};

// Pushes source centroids from correctly predicted regions, builds
// temporal-consensus centroids on the mixed window, and evaluates the
// alignment loss against the bank.
FatcOutcome run_fatc(TrainState& state, const ForwardTrace& src_trace, const LabelMap& source_label_t,
                     const ForwardTrace& mix_trace, const Frame& mixed_frame_prev,
                     const FlowField& mixed_flow) {
    const int num_classes = state.params.num_classes;
    FatcOutcome out;
    out.grad_features = FeatureMap(mix_trace.height, mix_trace.width, state.params.feature_dim);

    // Source prototypes. Feature grid equals the frame grid for this model,
    // but the label still goes through the resolution bridge.
    const LabelMap truth = downsample_labels(source_label_t, src_trace.features[1].height,
                                             src_trace.features[1].width);
    const LabelMap pred_src = argmax_map(src_trace.fused, num_classes);
    for (int c = 0; c < num_classes; ++c) {
        const BinaryMap valid = source_valid_mask(pred_src, truth, c);
        const auto category =
            state.categories[c].is_thing ? ClassCategory::Thing : ClassCategory::Stuff;
        const auto instances = split_instances(valid, category);
        for (const auto& centroid : compute_centroids(src_trace.features[1], instances, c)) {
            state.bank.push(centroid);
        }
    }

    // Mixed-domain centroids survive only where the current prediction agrees
    // with the warped previous one. Both predictions come from fused scores;
    // the previous frame gets a self-window pass (zero flow) since only the
    // fusion head is trained to emit class scores.
    const LabelMap pred_cur = argmax_map(mix_trace.fused, num_classes);
    const FlowField zero_flow(mix_trace.height, mix_trace.width);
    ForwardTrace prev_trace =
        forward(state.params, mixed_frame_prev, mixed_frame_prev, zero_flow);
    const LabelMap pred_prev = argmax_map(prev_trace.fused, num_classes);
    const FlowField flow_feat =
        resample_flow(mixed_flow, mix_trace.features[1].height, mix_trace.features[1].width);
    const WarpedLabels warped_prev = warp_backward_nearest(pred_prev, flow_feat);

    std::vector<BinaryMap> all_masks;
    std::vector<FeatureCentroid> all_centroids;
    for (int c = 0; c < num_classes; ++c) {
        const BinaryMap consensus = consensus_mask(pred_cur, warped_prev, c);
        const auto category =
            state.categories[c].is_thing ? ClassCategory::Thing : ClassCategory::Stuff;
        auto instances = split_instances(consensus, category);
        auto centroids = compute_centroids(mix_trace.features[1], instances, c);
        for (size_t i = 0; i < centroids.size(); ++i) {
            all_masks.push_back(std::move(instances[i]));
            all_centroids.push_back(std::move(centroids[i]));
        }
    }

    const AlignmentResult alignment =
        feature_alignment_loss(all_centroids, state.bank, state.cfg.fatc_class_reduction);
    out.loss = alignment.loss;
    scatter_centroid_grads(all_masks, alignment.centroid_grads, 1.0, out.grad_features);
    return out;
}

}  // namespace

TrainState make_train_state(const TrainConfig& cfg, const ModelParams& init,
                            const std::vector<ClassTraits>& categories) {
    TrainState s;
    s.cfg = cfg;
    s.params = init;
    s.bank = FeatureBank(init.num_classes, init.feature_dim, cfg.bank_capacity);
    s.categories = categories;
    if (s.categories.empty()) s.categories.resize(init.num_classes);
    return s;
}

StepReport train_step(TrainState& state, long iter, const SourceWindow& source,
                      const TargetWindow& target, const LabelMap& target_pseudo_label_t) {
    const TrainConfig& cfg = state.cfg;
    StepReport report;
    report.iteration = iter;
    report.kept_pseudo_fraction = kept_fraction(target_pseudo_label_t);

    // (1) Mix the target window per the configured augmentation.
    auto t0 = Clock::now();
    const Frame* mixed_prev = target.frame_prev;
    const Frame* mixed_cur = target.frame_cur;
    const LabelMap* mixed_label = &target_pseudo_label_t;
    const FlowField* mixed_flow = target.flow;
    MixResult cmom;
    DacsResult dacs_prev, dacs_cur;
    if (cfg.enable_cmom) {
        if (cfg.mixer_kind == MixerKind::Cmom) {
            cmom = mix_cmom(source, target, target_pseudo_label_t, cfg.mix,
                            static_cast<std::uint64_t>(iter));
            mixed_prev = &cmom.mixed_frame_prev;
            mixed_cur = &cmom.mixed_frame_cur;
            mixed_label = &cmom.mixed_label;
            mixed_flow = &cmom.mixed_flow;
        } else {
            // DACS baseline: each frame draws its own class set, flow is
            // left untouched; this is the temporal-context-breaking variant.
            dacs_prev = mix_dacs(*source.frame_prev, *target.frame_prev, *source.label_prev,
                                 target_pseudo_label_t, cfg.mix, 2 * static_cast<std::uint64_t>(iter));
            dacs_cur = mix_dacs(*source.frame_cur, *target.frame_cur, *source.label_cur,
                                target_pseudo_label_t, cfg.mix, 2 * static_cast<std::uint64_t>(iter) + 1);
            mixed_prev = &dacs_prev.mixed_frame;
            mixed_cur = &dacs_cur.mixed_frame;
            mixed_label = &dacs_cur.mixed_label;
        }
    }
    report.time_mix = seconds_since(t0);

    // (2)+(3) Forward both domains.
    t0 = Clock::now();
    ForwardTrace src_trace = forward(state.params, *source.frame_prev, *source.frame_cur, *source.flow);
    ForwardTrace mix_trace = forward(state.params, *mixed_prev, *mixed_cur, *mixed_flow);
    CrossEntropyResult ce_source = cross_entropy_loss(src_trace.fused, *source.label_cur);
    CrossEntropyResult ce_self = cross_entropy_loss(mix_trace.fused, *mixed_label);
    report.time_forward = seconds_since(t0);
    report.loss_source = ce_source.loss;
    report.loss_self = ce_self.loss;

    // (4) Feature alignment on the mixed window, prototypes from the source
    // window.
    FatcOutcome fatc;
    if (cfg.enable_fatc) {
        t0 = Clock::now();
        fatc = run_fatc(state, src_trace, *source.label_cur, mix_trace, *mixed_prev, *mixed_flow);
        report.time_fatc = seconds_since(t0);
        report.loss_feature = fatc.loss;
    }

    report.lr = poly_lr(cfg.optim, iter);
    report.total = report.loss_source + cfg.lambda_mix * report.loss_self +
                   cfg.lambda_feature * report.loss_feature;

    // (5) One backward accumulating the three loss paths, then (6) SGD.
    t0 = Clock::now();
    ModelParams grads = zeros_like(state.params);
    backward(state.params, src_trace, ce_source.grad, nullptr, grads);
    for (double& g : ce_self.grad.data) g *= cfg.lambda_mix;
    const FeatureMap* injected = nullptr;
    if (cfg.enable_fatc) {
        for (double& g : fatc.grad_features.data) g *= cfg.lambda_feature;
        injected = &fatc.grad_features;
    }
    backward(state.params, mix_trace, ce_self.grad, injected, grads);
    sgd_step(state.params, grads, state.sgd, iter, cfg.optim);
    report.time_backward = seconds_since(t0);
    return report;
}

namespace {

// Full decoded clip held in memory; the training loops revisit every clip
// many times and the tensor decode is not free.
struct CachedClip {
    std::vector<Frame> frames;
    std::vector<FlowField> flows;
    std::vector<LabelMap> labels;  // empty for target clips (firewalled)
};

CachedClip load_clip(const Dataset& dataset, Domain domain, int clip, bool with_labels) {
    CachedClip out;
    const int T = dataset.meta().num_frames;
    for (int t = 0; t < T; ++t) {
        out.frames.push_back(dataset.frame(domain, clip, t));
        if (t >= 1) out.flows.push_back(dataset.flow(domain, clip, t));
        if (with_labels) {
            out.labels.push_back(dataset.label(domain, clip, t, LabelAccess::Training));
        }
    }
    return out;
}

}  // namespace

ModelParams pretrain_source_only(const TrainConfig& cfg, const Dataset& dataset,
                                 const std::filesystem::path& checkpoint_dir) {
    const auto& meta = dataset.meta();
    require(meta.n_source > 0, "pretrain_source_only: empty source split");
    const long iters = cfg.optim.max_iter / 4;

    ModelParams params =
        init_params(meta.num_classes, cfg.feature_dim, derive_seed(cfg.seed, 0x1A17));
    // The schedule horizon stays at the full training length; pretraining
    // walks the first quarter of the same decay curve.
    OptimConfig optim = cfg.optim;
    optim.max_iter = std::max<long>(1, cfg.optim.max_iter);
    SgdState sgd;

    std::vector<CachedClip> cache(meta.n_source);
    for (int i = 0; i < meta.n_source; ++i) cache[i] = load_clip(dataset, Domain::Source, i, true);

    auto clip_rng = make_rng(cfg.seed, 0xC11F5);
    auto t_rng = make_rng(cfg.seed, 0x7D12A);
    std::vector<int> order(meta.n_source);
    for (int i = 0; i < meta.n_source; ++i) order[i] = i;

    size_t cursor = order.size();
    for (long iter = 0; iter < iters; ++iter) {
        if (cursor >= order.size()) {
            std::shuffle(order.begin(), order.end(), clip_rng);
            cursor = 0;
        }
        const CachedClip& clip = cache[order[cursor++]];
        const int t = 1 + static_cast<int>(uniform01(t_rng) * (meta.num_frames - 1));

        ForwardTrace trace = forward(params, clip.frames[t - 1], clip.frames[t], clip.flows[t - 1]);
        CrossEntropyResult ce = cross_entropy_loss(trace.fused, clip.labels[t]);
        ModelParams grads = zeros_like(params);
        backward(params, trace, ce.grad, nullptr, grads);
        sgd_step(params, grads, sgd, iter, optim);
    }

    save_checkpoint(checkpoint_dir, params, iters);
    return params;
}

SelfTrainResult run_self_training(const TrainConfig& cfg, const Dataset& dataset,
                                  const ModelParams& init,
                                  const std::filesystem::path& pseudo_dir,
                                  const std::filesystem::path& run_dir) {
    if (!pseudo_labels_present(pseudo_dir)) {
        throw std::runtime_error("run_self_training: missing pseudo-labels under " +
                                 pseudo_dir.string());
    }
    const auto& meta = dataset.meta();
    const auto& target_clips = dataset.target_train_clips();
    require(!target_clips.empty(), "run_self_training: no target training clips");

    TrainState state = make_train_state(cfg, init, meta.categories);
    SelfTrainResult result;
    result.reports.reserve(cfg.optim.max_iter);

    std::vector<CachedClip> source_cache(meta.n_source);
    for (int i = 0; i < meta.n_source; ++i) source_cache[i] = load_clip(dataset, Domain::Source, i, true);
    std::map<int, CachedClip> target_cache;
    std::map<std::pair<int, int>, LabelMap> pseudo_cache;
    for (int clip : target_clips) {
        target_cache[clip] = load_clip(dataset, Domain::Target, clip, false);
        for (int t = 1; t < meta.num_frames; ++t) {
            pseudo_cache[{clip, t}] = load_pseudo_label(pseudo_dir, clip, t, meta.num_classes);
        }
    }

    auto clip_rng = make_rng(cfg.seed, 0x5C1F0);
    auto t_rng = make_rng(cfg.seed, 0x70FF5);
    std::vector<int> source_order(meta.n_source), target_order(target_clips);
    for (int i = 0; i < meta.n_source; ++i) source_order[i] = i;

    size_t cursor = std::max(source_order.size(), target_order.size());
    size_t epoch_len = cursor;
    for (long iter = 0; iter < cfg.optim.max_iter; ++iter) {
        if (cursor >= epoch_len) {
            std::shuffle(source_order.begin(), source_order.end(), clip_rng);
            std::shuffle(target_order.begin(), target_order.end(), clip_rng);
            cursor = 0;
        }
        const CachedClip& src = source_cache[source_order[cursor % source_order.size()]];
        const int target_clip = target_order[cursor % target_order.size()];
        const CachedClip& tgt = target_cache[target_clip];
        ++cursor;
        const int t = 1 + static_cast<int>(uniform01(t_rng) * (meta.num_frames - 1));

        SourceWindow source{&src.frames[t - 1], &src.frames[t], &src.labels[t - 1], &src.labels[t],
                            &src.flows[t - 1]};
        TargetWindow target{&tgt.frames[t - 1], &tgt.frames[t], &tgt.flows[t - 1]};
        result.reports.push_back(
            train_step(state, iter, source, target, pseudo_cache.at({target_clip, t})));
    }

    std::filesystem::create_directories(run_dir);
    save_checkpoint(run_dir / "checkpoint", state.params, cfg.optim.max_iter);
    state.bank.save(run_dir / "bank");
    write_train_log(result.reports, run_dir / "train_log.csv");
    write_timings(result.reports, run_dir / "timings.csv");
    result.params = std::move(state.params);
    return result;
}

void write_train_log(const std::vector<StepReport>& reports, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    out.precision(17);
    out << "iteration,loss_source,loss_self,loss_feature,total_loss,lr,kept_pseudo_fraction\n";
    for (const auto& r : reports) {
        out << r.iteration << ',' << r.loss_source << ',' << r.loss_self << ',' << r.loss_feature
            << ',' << r.total << ',' << r.lr << ',' << r.kept_pseudo_fraction << '\n';
    }
}

void write_timings(const std::vector<StepReport>& reports, const std::filesystem::path& csv_path) {
    std::ofstream out(csv_path);
    out.precision(9);
    out << "iteration,time_mix,time_forward,time_backward,time_fatc\n";
    for (const auto& r : reports) {
        out << r.iteration << ',' << r.time_mix << ',' << r.time_forward << ',' << r.time_backward
            << ',' << r.time_fatc << '\n';
    }
}

}  // namespace davss
