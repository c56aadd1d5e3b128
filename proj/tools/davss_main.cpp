// davss: one binary for the whole workflow. Subcommands: gen-data, pretrain,
// pseudolabel, train, eval, ablate, mix, inspect-bank. A JSON config plus one
// seed determine every output bit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "davss/config.hpp"
#include "davss/evaluate.hpp"
#include "davss/tensor.hpp"

namespace fs = std::filesystem;
using namespace davss;

namespace {

constexpr const char* kToolVersion = "davss 0.1.0";

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? default_run_config() : load_run_config(opts.config_path);
    if (opts.config_path.empty()) apply_seed(cfg, cfg.seed);
    if (opts.seed) apply_seed(cfg, *opts.seed);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run config")->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "root seed overriding the config");
}

int cmd_gen_data(const RunConfig& cfg) {
    WorldSpec world = cfg.world;
    generate_dataset(world, cfg.source_style, cfg.target_style, cfg.n_source, cfg.n_target,
                     cfg.eval_fraction, cfg.dataset_root);
    std::cout << "wrote " << cfg.n_source << " source + " << cfg.n_target << " target clips to "
              << cfg.dataset_root.string() << "\n";
    write_run_manifest(cfg.run_dir, cfg, {cfg.dataset_root.string()}, kToolVersion);
    return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
    Dataset dataset(cfg.dataset_root);
    const fs::path ckpt = cfg.run_dir / "pretrain";
    pretrain_source_only(cfg.train, dataset, ckpt);
    std::cout << "pretrained checkpoint at " << ckpt.string() << "\n";
    write_run_manifest(cfg.run_dir, cfg, {ckpt.string()}, kToolVersion);
    return 0;
}

int cmd_pseudolabel(const RunConfig& cfg) {
    Dataset dataset(cfg.dataset_root);
    const fs::path ckpt = cfg.run_dir / "pretrain";
    if (!fs::exists(ckpt / "manifest.json")) {
        throw std::runtime_error("missing pretrained checkpoint at " + ckpt.string() +
                                 "; run `davss pretrain` first");
    }
    auto [params, iter] = load_checkpoint(ckpt);
    const fs::path out = pseudo_dir_for(cfg);
    generate_pseudo_labels(dataset, params, cfg.train.pseudo, out);
    std::cout << "pseudo-labels written to " << out.string() << "\n";
    write_run_manifest(cfg.run_dir, cfg, {out.string()}, kToolVersion);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    Dataset dataset(cfg.dataset_root);
    const fs::path pseudo_dir = pseudo_dir_for(cfg);
    if (!pseudo_labels_present(pseudo_dir)) {
        throw std::runtime_error("missing pseudo-labels under " + pseudo_dir.string() +
                                 "; run `davss pseudolabel` first");
    }
    const fs::path ckpt = cfg.run_dir / "pretrain";
    if (!fs::exists(ckpt / "manifest.json")) {
        throw std::runtime_error("missing pretrained checkpoint at " + ckpt.string() +
                                 "; run `davss pretrain` first");
    }
    auto [init, iter] = load_checkpoint(ckpt);
    const fs::path run = cfg.run_dir / "selftrain";
    SelfTrainResult result = run_self_training(cfg.train, dataset, init, pseudo_dir, run);
    std::cout << "self-training finished after " << result.reports.size() << " iterations; outputs in "
              << run.string() << "\n";
    write_run_manifest(cfg.run_dir, cfg,
                       {(run / "checkpoint").string(), (run / "train_log.csv").string(),
                        (run / "timings.csv").string(), (run / "bank").string()},
                       kToolVersion);
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::string checkpoint, bool as_json) {
    Dataset dataset(cfg.dataset_root);
    fs::path ckpt = checkpoint.empty() ? cfg.run_dir / "selftrain" / "checkpoint" : fs::path(checkpoint);
    if (!fs::exists(ckpt / "manifest.json")) {
        throw std::runtime_error("missing checkpoint at " + ckpt.string());
    }
    auto [params, iter] = load_checkpoint(ckpt);
    IouReport rep = evaluate_clips(params, dataset, Domain::Target, dataset.target_eval_clips());

    if (as_json) {
        std::cout << "{\n  \"miou\": " << rep.miou << ",\n  \"per_class\": [";
        for (size_t c = 0; c < rep.per_class.size(); ++c) {
            if (c) std::cout << ", ";
            if (rep.defined[c]) {
                std::cout << rep.per_class[c];
            } else {
                std::cout << "null";
            }
        }
        std::cout << "]\n}\n";
    } else {
        std::cout << "class,iou\n";
        for (size_t c = 0; c < rep.per_class.size(); ++c) {
            std::cout << c << ',';
            if (rep.defined[c]) {
                std::cout << rep.per_class[c];
            } else {
                std::cout << "undefined";
            }
            std::cout << '\n';
        }
        std::cout << "mIoU: " << rep.miou << "\n";
    }
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& suite_name, const std::string& seeds_csv,
               bool as_json) {
    Dataset dataset(cfg.dataset_root);
    const fs::path pseudo_probe = pseudo_dir_for(cfg);
    (void)pseudo_probe;  // ablation manages per-seed pseudo-labels itself

    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_csv);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) seeds.push_back(cfg.seed);

    AblationSuite suite = parse_suite(suite_name);
    const fs::path work = cfg.run_dir / ("ablate_" + suite_name);
    AblationTable table = run_ablation(suite, cfg.train, dataset, seeds, work);

    const fs::path csv_path = work / "results.csv";
    fs::create_directories(work);
    {
        std::ofstream csv(csv_path);
        write_ablation_csv(table, csv);
    }
    if (as_json) {
        std::cout << ablation_json(table) << "\n";
    } else {
        write_ablation_csv(table, std::cout);
    }
    write_run_manifest(cfg.run_dir, cfg, {csv_path.string()}, kToolVersion);
    return 0;
}

int cmd_mix(const RunConfig& cfg, int source_clip, int target_clip, int t, const std::string& out_str) {
    Dataset dataset(cfg.dataset_root);
    const auto& meta = dataset.meta();
    require(t >= 1 && t < meta.num_frames, "mix: t must be in [1, clip_length)");

    Frame src_prev = dataset.frame(Domain::Source, source_clip, t - 1);
    Frame src_cur = dataset.frame(Domain::Source, source_clip, t);
    FlowField src_flow = dataset.flow(Domain::Source, source_clip, t);
    LabelMap src_label_prev = dataset.label(Domain::Source, source_clip, t - 1, LabelAccess::Training);
    LabelMap src_label_cur = dataset.label(Domain::Source, source_clip, t, LabelAccess::Training);
    Frame tgt_prev = dataset.frame(Domain::Target, target_clip, t - 1);
    Frame tgt_cur = dataset.frame(Domain::Target, target_clip, t);
    FlowField tgt_flow = dataset.flow(Domain::Target, target_clip, t);

    // Without a model in the loop the dump uses an empty pseudo-label; the
    // pasted classes are exactly what the masks select.
    LabelMap pseudo(meta.height, meta.width, meta.num_classes);

    MixConfig mix = cfg.train.mix;
    mix.categories = meta.categories;
    SourceWindow source{&src_prev, &src_cur, &src_label_prev, &src_label_cur, &src_flow};
    TargetWindow target{&tgt_prev, &tgt_cur, &tgt_flow};
    MixResult result = mix_cmom(source, target, pseudo, mix, 0);

    const fs::path out = out_str.empty() ? cfg.run_dir / "mixdump" : fs::path(out_str);
    fs::create_directories(out);
    save_frame(out / "mixed_frame_prev.cmt", result.mixed_frame_prev);
    save_frame(out / "mixed_frame_cur.cmt", result.mixed_frame_cur);
    save_label(out / "mixed_label.cmt", result.mixed_label);
    save_flow(out / "mixed_flow.cmt", result.mixed_flow);
    write_tensor(out / "mask_prev.cmt", Dtype::U8,
                 {static_cast<std::uint32_t>(meta.height), static_cast<std::uint32_t>(meta.width)},
                 result.mask_prev.data);
    write_tensor(out / "mask_cur.cmt", Dtype::U8,
                 {static_cast<std::uint32_t>(meta.height), static_cast<std::uint32_t>(meta.width)},
                 result.mask_cur.data);
    {
        std::ofstream side(out / "selected_classes.txt");
        for (int c : result.selected_classes) side << c << "\n";
    }
    std::cout << "mix dump written to " << out.string() << " (selected";
    for (int c : result.selected_classes) std::cout << ' ' << c;
    std::cout << ")\n";
    return 0;
}

int cmd_inspect_bank(const RunConfig& cfg, const std::string& bank_str, const std::string& out_str) {
    const fs::path bank_dir = bank_str.empty() ? cfg.run_dir / "selftrain" / "bank" : fs::path(bank_str);
    FeatureBank bank = FeatureBank::load(bank_dir);

    const fs::path out = out_str.empty() ? cfg.run_dir / "bank_dump" : fs::path(out_str);
    bank.save(out);
    std::cout << "class,entries,capacity,mean_l2\n";
    for (int c = 0; c < bank.num_classes(); ++c) {
        double norm = 0.0;
        for (const auto& entry : bank.entries(c)) {
            double sq = 0.0;
            for (double v : entry) sq += v * v;
            norm += std::sqrt(sq);
        }
        const size_t n = bank.size(c);
        std::cout << c << ',' << n << ',' << bank.capacity() << ',' << (n ? norm / n : 0.0) << "\n";
    }
    std::cout << "bank tensors dumped to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain-adaptive video segmentation lab"};
    app.require_subcommand(1);

    CommonOpts gen_opts, pre_opts, pseudo_opts, train_opts, eval_opts, ablate_opts, mix_opts,
        bank_opts;

    auto* gen = app.add_subcommand("gen-data", "generate the two-domain benchmark");
    add_common(gen, gen_opts);

    auto* pre = app.add_subcommand("pretrain", "source-only pretraining");
    add_common(pre, pre_opts);

    auto* pseudo = app.add_subcommand("pseudolabel", "offline pseudo-label generation");
    add_common(pseudo, pseudo_opts);

    auto* train = app.add_subcommand("train", "self-training with CMOM/FATC");
    add_common(train, train_opts);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the target eval split");
    add_common(eval, eval_opts);
    std::string eval_checkpoint;
    bool eval_json = false;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
    eval->add_flag("--json", eval_json, "emit JSON instead of CSV");

    auto* ablate = app.add_subcommand("ablate", "run an ablation suite");
    add_common(ablate, ablate_opts);
    std::string suite_name, seeds_csv;
    bool ablate_json = false;
    ablate->add_option("--suite", suite_name, "loss_flags | mix_ratio | mix_contents | mixer_kind")
        ->required();
    ablate->add_option("--seeds", seeds_csv, "comma-separated seeds");
    ablate->add_flag("--json", ablate_json, "emit JSON instead of CSV");

    auto* mix = app.add_subcommand("mix", "dump one CMOM mix for inspection");
    add_common(mix, mix_opts);
    int mix_source_clip = 0, mix_target_clip = 0, mix_t = 1;
    std::string mix_out;
    bool mix_dump = false;
    mix->add_flag("--dump", mix_dump, "write MixResult tensors");
    mix->add_option("--source-clip", mix_source_clip, "source clip index");
    mix->add_option("--target-clip", mix_target_clip, "target clip index");
    mix->add_option("--t", mix_t, "window time t (uses frames t-1, t)");
    mix->add_option("--out", mix_out, "output directory");

    auto* bank = app.add_subcommand("inspect-bank", "dump feature bank contents per class");
    add_common(bank, bank_opts);
    std::string bank_dir, bank_out;
    bank->add_option("--bank", bank_dir, "bank directory (default: run_dir/selftrain/bank)");
    bank->add_option("--out", bank_out, "output directory for tensor dumps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << e.what() << "\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(resolve_config(gen_opts));
        if (pre->parsed()) return cmd_pretrain(resolve_config(pre_opts));
        if (pseudo->parsed()) return cmd_pseudolabel(resolve_config(pseudo_opts));
        if (train->parsed()) return cmd_train(resolve_config(train_opts));
        if (eval->parsed()) return cmd_eval(resolve_config(eval_opts), eval_checkpoint, eval_json);
        if (ablate->parsed())
            return cmd_ablate(resolve_config(ablate_opts), suite_name, seeds_csv, ablate_json);
        if (mix->parsed())
            return cmd_mix(resolve_config(mix_opts), mix_source_clip, mix_target_clip, mix_t, mix_out);
        if (bank->parsed()) return cmd_inspect_bank(resolve_config(bank_opts), bank_dir, bank_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
