#include "davss/evaluate.hpp"

#include <cmath>
#include <numeric>
#include <ostream>

#include "json.hpp"

#include "davss/flowops.hpp"
#include "davss/rng.hpp"
#include "davss/tensor.hpp"

namespace davss {

std::uint64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    require(num_classes == other.num_classes, "ConfusionMatrix::merge: size mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& cm, const LabelMap& truth, const LabelMap& pred) {
    require(truth.height == pred.height && truth.width == pred.width, "accumulate: shape mismatch");
    for (size_t i = 0; i < truth.data.size(); ++i) {
        const std::uint8_t t = truth.data[i];
        if (t == kIgnoreLabel) continue;
        const std::uint8_t p = pred.data[i];
        require(t < cm.num_classes && p < cm.num_classes, "accumulate: class id out of range");
        ++cm.at(t, p);
    }
}

IouReport iou_scores(const ConfusionMatrix& cm) {
    const int nc = cm.num_classes;
    IouReport rep;
    rep.per_class.assign(nc, 0.0);
    rep.defined.assign(nc, false);

    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < nc; ++c) {
        std::uint64_t row = 0, col = 0;
        for (int k = 0; k < nc; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        const std::uint64_t inter = cm.at(c, c);
        const std::uint64_t uni = row + col - inter;
        if (uni == 0) continue;  // never seen nor predicted: excluded from the mean
        rep.per_class[c] = static_cast<double>(inter) / static_cast<double>(uni);
        rep.defined[c] = true;
        sum += rep.per_class[c];
        ++defined;
    }
    rep.miou = defined > 0 ? sum / defined : 0.0;
    return rep;
}

ConfusionMatrix confusion_over_clips(const ModelParams& params, const Dataset& dataset,
                                     Domain domain, const std::vector<int>& clips) {
    const auto& meta = dataset.meta();
    ConfusionMatrix cm(meta.num_classes);
    const FlowField zero_flow(meta.height, meta.width);

    for (int clip : clips) {
        for (int t = 0; t < meta.num_frames; ++t) {
            Frame cur = dataset.frame(domain, clip, t);
            Frame prev = t >= 1 ? dataset.frame(domain, clip, t - 1) : cur;
            FlowField flow = t >= 1 ? dataset.flow(domain, clip, t) : zero_flow;
            ForwardTrace trace = forward(params, prev, cur, flow);
            LabelMap pred = argmax_map(trace.fused, meta.num_classes);
            LabelMap truth = dataset.label(domain, clip, t, LabelAccess::Evaluation);
            accumulate(cm, truth, pred);
        }
    }
    return cm;
}

IouReport evaluate_clips(const ModelParams& params, const Dataset& dataset, Domain domain,
                         const std::vector<int>& clips) {
    return iou_scores(confusion_over_clips(params, dataset, domain, clips));
}

AblationSuite parse_suite(const std::string& name) {
    if (name == "loss_flags") return AblationSuite::LossFlags;
    if (name == "mix_ratio") return AblationSuite::MixRatio;
    if (name == "mix_contents") return AblationSuite::MixContents;
    if (name == "mixer_kind") return AblationSuite::MixerKind;
    throw std::invalid_argument("unknown ablation suite: " + name);
}

namespace {

struct CellSpec {
    std::string name;
    bool source_only = false;  // evaluate the pretrained model directly
    TrainConfig cfg;
};

std::vector<CellSpec> suite_cells(AblationSuite suite, const TrainConfig& base) {
    std::vector<CellSpec> cells;
    auto with = [&](const std::string& name, auto&& mutate, bool source_only = false) {
        CellSpec cell;
        cell.name = name;
        cell.cfg = base;
        mutate(cell.cfg);
        cell.source_only = source_only;
        cells.push_back(std::move(cell));
    };

    switch (suite) {
        case AblationSuite::LossFlags:
            with("baseline", [](TrainConfig&) {}, true);
            with("self_training", [](TrainConfig& c) {
                c.enable_cmom = false;
                c.enable_fatc = false;
            });
            with("st_cmom", [](TrainConfig& c) {
                c.enable_cmom = true;
                c.enable_fatc = false;
            });
            with("st_fatc", [](TrainConfig& c) {
                c.enable_cmom = false;
                c.enable_fatc = true;
            });
            with("st_cmom_fatc", [](TrainConfig& c) {
                c.enable_cmom = true;
                c.enable_fatc = true;
            });
            break;
        case AblationSuite::MixRatio:
            for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
                std::string name = "ratio_" + std::to_string(static_cast<int>(rho * 100));
                with(name, [rho](TrainConfig& c) {
                    c.enable_cmom = true;
                    c.enable_fatc = true;
                    c.mix.class_ratio = rho;
                });
            }
            break;
        case AblationSuite::MixContents:
            for (auto [name, filter] :
                 std::initializer_list<std::pair<const char*, ClassFilter>>{
                     {"things", ClassFilter::Things},
                     {"stuffs", ClassFilter::Stuffs},
                     {"movable", ClassFilter::Movable},
                     {"stationary", ClassFilter::Stationary},
                     {"all", ClassFilter::All}}) {
                with(name, [f = filter](TrainConfig& c) {
                    c.enable_cmom = true;
                    c.enable_fatc = true;
                    c.mix.class_filter = f;
                });
            }
            break;
        case AblationSuite::MixerKind:
            with("cmom", [](TrainConfig& c) {
                c.enable_cmom = true;
                c.mixer_kind = MixerKind::Cmom;
            });
            with("dacs", [](TrainConfig& c) {
                c.enable_cmom = true;
                c.mixer_kind = MixerKind::Dacs;
            });
            break;
    }
    return cells;
}

// Mean flow violation rate of the mixed label pair over seeded windows, used
// by the mixer_kind suite. Mixed labels at both times are formed from ground
// truth (metric-only construction; labels are read straight from disk, not
// through the trainer's firewalled path).
double mean_mixed_violation_rate(const Dataset& dataset, const TrainConfig& cfg, int windows,
                                 std::uint64_t seed) {
    const auto& meta = dataset.meta();
    auto rng = make_rng(seed, 0xF10F);
    double sum = 0.0;
    for (int i = 0; i < windows; ++i) {
        const int nt = static_cast<int>(dataset.target_train_clips().size());
        const int source_clip = static_cast<int>(rng() % static_cast<std::uint64_t>(meta.n_source));
        const int target_clip =
            dataset.target_train_clips()[static_cast<size_t>(rng() % static_cast<std::uint64_t>(nt))];
        const int t = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(meta.num_frames - 1));

        LabelMap src_prev_label =
            load_label(dataset.label_path(Domain::Source, source_clip, t - 1), meta.num_classes);
        LabelMap src_cur_label =
            load_label(dataset.label_path(Domain::Source, source_clip, t), meta.num_classes);
        LabelMap tgt_prev_label =
            load_label(dataset.label_path(Domain::Target, target_clip, t - 1), meta.num_classes);
        LabelMap tgt_cur_label =
            load_label(dataset.label_path(Domain::Target, target_clip, t), meta.num_classes);
        FlowField src_flow = dataset.flow(Domain::Source, source_clip, t);
        FlowField tgt_flow = dataset.flow(Domain::Target, target_clip, t);

        MixConfig mix = cfg.mix;
        mix.rng_seed = derive_seed(seed, 0xD1CE + i);
        LabelMap mixed_prev, mixed_cur;
        FlowField flow;
        if (cfg.mixer_kind == MixerKind::Cmom) {
            auto selected = select_classes(src_cur_label, mix, 0);
            auto [m_prev, m_cur] = build_masks(src_prev_label, src_cur_label, selected);
            mixed_prev = tgt_prev_label;
            mixed_cur = tgt_cur_label;
            flow = tgt_flow;
            for (size_t p = 0; p < m_prev.data.size(); ++p) {
                if (m_prev.data[p]) {
                    mixed_prev.data[p] = src_prev_label.data[p];
                    flow.data[2 * p] = src_flow.data[2 * p];
                    flow.data[2 * p + 1] = src_flow.data[2 * p + 1];
                }
                if (m_cur.data[p]) mixed_cur.data[p] = src_cur_label.data[p];
            }
        } else {
            auto sel_prev = select_classes(src_prev_label, mix, 0);
            auto sel_cur = select_classes(src_cur_label, mix, 1);
            auto m_prev = build_masks(src_prev_label, src_prev_label, sel_prev).first;
            auto m_cur = build_masks(src_cur_label, src_cur_label, sel_cur).first;
            mixed_prev = tgt_prev_label;
            mixed_cur = tgt_cur_label;
            flow = tgt_flow;
            for (size_t p = 0; p < m_prev.data.size(); ++p) {
                if (m_prev.data[p]) mixed_prev.data[p] = src_prev_label.data[p];
                if (m_cur.data[p]) mixed_cur.data[p] = src_cur_label.data[p];
            }
        }
        sum += flow_violation_rate(mixed_prev, mixed_cur, flow);
    }
    return sum / windows;
}

}  // namespace

AblationTable run_ablation(AblationSuite suite, const TrainConfig& base, const Dataset& dataset,
                           const std::vector<std::uint64_t>& seeds,
                           const std::filesystem::path& work_dir) {
    namespace fs = std::filesystem;
    AblationTable table;
    switch (suite) {
        case AblationSuite::LossFlags: table.suite = "loss_flags"; break;
        case AblationSuite::MixRatio: table.suite = "mix_ratio"; break;
        case AblationSuite::MixContents: table.suite = "mix_contents"; break;
        case AblationSuite::MixerKind: table.suite = "mixer_kind"; break;
    }

    auto cells = suite_cells(suite, base);
    for (auto& cell_spec : cells) table.cells.push_back(AblationCell{cell_spec.name, {}, 0, 0, {}});

    for (std::uint64_t seed : seeds) {
        const fs::path seed_dir = work_dir / ("seed_" + std::to_string(seed));
        const fs::path pretrain_dir = seed_dir / "pretrain";
        const fs::path pseudo_dir = seed_dir / "pseudo";

        TrainConfig seeded = base;
        seeded.seed = seed;
        ModelParams pretrained;
        if (fs::exists(pretrain_dir / "manifest.json")) {
            pretrained = load_checkpoint(pretrain_dir).first;
        } else {
            pretrained = pretrain_source_only(seeded, dataset, pretrain_dir);
        }
        if (!pseudo_labels_present(pseudo_dir)) {
            generate_pseudo_labels(dataset, pretrained, seeded.pseudo, pseudo_dir);
        }

        for (size_t i = 0; i < cells.size(); ++i) {
            const CellSpec& spec = cells[i];
            double miou;
            if (spec.source_only) {
                miou = evaluate_clips(pretrained, dataset, Domain::Target, dataset.target_eval_clips())
                           .miou;
            } else {
                TrainConfig cfg = spec.cfg;
                cfg.seed = seed;
                const fs::path run_dir = seed_dir / spec.name;
                SelfTrainResult run = run_self_training(cfg, dataset, pretrained, pseudo_dir, run_dir);
                miou = evaluate_clips(run.params, dataset, Domain::Target, dataset.target_eval_clips())
                           .miou;
            }
            table.cells[i].mious.push_back(miou);
        }
    }

    for (size_t i = 0; i < table.cells.size(); ++i) {
        auto& cell = table.cells[i];
        const double n = static_cast<double>(cell.mious.size());
        cell.mean = std::accumulate(cell.mious.begin(), cell.mious.end(), 0.0) / n;
        double var = 0.0;
        for (double v : cell.mious) var += (v - cell.mean) * (v - cell.mean);
        cell.stdev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;

        if (suite == AblationSuite::MixerKind) {
            TrainConfig cfg = cells[i].cfg;
            cell.extras.emplace_back("flow_violation_rate",
                                     mean_mixed_violation_rate(dataset, cfg, 50, seeds.front()));
        }
    }
    return table;
}

void write_ablation_csv(const AblationTable& table, std::ostream& out) {
    out << "suite,cell,mean_miou,stdev_miou,seeds";
    bool extras = false;
    for (const auto& cell : table.cells) extras |= !cell.extras.empty();
    if (extras) out << ",extra_metric,extra_value";
    out << "\n";
    out.precision(10);
    for (const auto& cell : table.cells) {
        out << table.suite << ',' << cell.name << ',' << cell.mean << ',' << cell.stdev << ',';
        for (size_t i = 0; i < cell.mious.size(); ++i) {
            if (i) out << ';';
            out << cell.mious[i];
        }
        if (extras) {
            if (!cell.extras.empty()) {
                out << ',' << cell.extras.front().first << ',' << cell.extras.front().second;
            } else {
                out << ",,";
            }
        }
        out << '\n';
    }
}

std::string ablation_json(const AblationTable& table) {
    nlohmann::json j;
    j["suite"] = table.suite;
    j["cells"] = nlohmann::json::array();
    for (const auto& cell : table.cells) {
        nlohmann::json c;
        c["name"] = cell.name;
        c["mious"] = cell.mious;
        c["mean"] = cell.mean;
        c["stdev"] = cell.stdev;
        for (const auto& [k, v] : cell.extras) c[k] = v;
        j["cells"].push_back(c);
    }
    return j.dump(2);
}

}  // namespace davss
