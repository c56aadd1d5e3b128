#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "davss/config.hpp"
#include "davss/evaluate.hpp"
#include "davss/trainer.hpp"

using namespace davss;
namespace fs = std::filesystem;

namespace {

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_checkpoint(const fs::path& a, const fs::path& b) {
    for (const char* name :
         {"conv1_weights.cmt", "conv1_bias.cmt", "conv2_weights.cmt", "conv2_bias.cmt",
          "classifier_weights.cmt", "classifier_bias.cmt", "fusion_weights.cmt", "fusion_bias.cmt"}) {
        if (file_bytes(a / name) != file_bytes(b / name)) return false;
    }
    return true;
}

// One desk-scale-in-miniature workspace shared by the trainer tests:
// a 24x24 two-domain dataset, a short pretrain and pseudo-labels. The
// directory is keyed by the config hash so stale caches from older builds
// never leak in.
struct TrainerFixture {
    fs::path root;
    RunConfig cfg;
    ModelParams pretrained{};

    TrainerFixture() {
        cfg = default_run_config();
        apply_seed(cfg, 11);
        cfg.world.height = 24;
        cfg.world.width = 24;
        cfg.world.clip_length = 3;
        cfg.n_source = 10;
        cfg.n_target = 10;
        cfg.eval_fraction = 0.3;
        cfg.train.optim.max_iter = 400;
        root = fs::temp_directory_path() / ("davss_trainer_fixture_" + config_hash(cfg).substr(0, 8));
        cfg.dataset_root = root / "data";
        cfg.run_dir = root / "run";

        if (!fs::exists(cfg.dataset_root / "meta.json")) {
            generate_dataset(cfg.world, cfg.source_style, cfg.target_style, cfg.n_source,
                             cfg.n_target, cfg.eval_fraction, cfg.dataset_root);
        }
        Dataset ds(cfg.dataset_root);
        if (fs::exists(cfg.run_dir / "pretrain" / "manifest.json")) {
            pretrained = load_checkpoint(cfg.run_dir / "pretrain").first;
        } else {
            pretrained = pretrain_source_only(cfg.train, ds, cfg.run_dir / "pretrain");
        }
        if (!pseudo_labels_present(pseudo_dir_for(cfg))) {
            generate_pseudo_labels(ds, pretrained, cfg.train.pseudo, pseudo_dir_for(cfg));
        }
    }

    Dataset dataset() const { return Dataset(cfg.dataset_root); }
};

TrainerFixture& fixture() {
    static TrainerFixture fx;
    return fx;
}

struct StepInputs {
    Frame sf_prev, sf_cur, tf_prev, tf_cur;
    LabelMap sl_prev, sl_cur, pseudo;
    FlowField s_flow, t_flow;

    explicit StepInputs(const TrainerFixture& fx, int t = 1) {
        Dataset ds = fx.dataset();
        sf_prev = ds.frame(Domain::Source, 0, t - 1);
        sf_cur = ds.frame(Domain::Source, 0, t);
        sl_prev = ds.label(Domain::Source, 0, t - 1, LabelAccess::Training);
        sl_cur = ds.label(Domain::Source, 0, t, LabelAccess::Training);
        s_flow = ds.flow(Domain::Source, 0, t);
        tf_prev = ds.frame(Domain::Target, 0, t - 1);
        tf_cur = ds.frame(Domain::Target, 0, t);
        t_flow = ds.flow(Domain::Target, 0, t);
        pseudo = load_pseudo_label(pseudo_dir_for(fx.cfg), 0, t, 8);
    }

    SourceWindow source() const { return {&sf_prev, &sf_cur, &sl_prev, &sl_cur, &s_flow}; }
    TargetWindow target() const { return {&tf_prev, &tf_cur, &t_flow}; }
};

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("step report satisfies the loss combination identity") {
    auto& fx = fixture();
    StepInputs in(fx);
    TrainConfig tc = fx.cfg.train;
    tc.lambda_mix = 0.7;
    tc.lambda_feature = 0.05;
    TrainState state = make_train_state(tc, fx.pretrained, fx.dataset().meta().categories);

    for (long iter = 0; iter < 3; ++iter) {
        StepReport rep = train_step(state, iter, in.source(), in.target(), in.pseudo);
        const double want =
            rep.loss_source + tc.lambda_mix * rep.loss_self + tc.lambda_feature * rep.loss_feature;
        CHECK(std::abs(rep.total - want) <= 1e-9);
        CHECK(rep.lr == doctest::Approx(poly_lr(tc.optim, iter)));
    }
}

TEST_CASE("disabling both methods reduces to plain self-training on the target window") {
    auto& fx = fixture();
    StepInputs in(fx);
    TrainConfig tc = fx.cfg.train;
    tc.enable_cmom = false;
    tc.enable_fatc = false;
    TrainState state = make_train_state(tc, fx.pretrained, fx.dataset().meta().categories);

    // expected L_self: cross entropy of the *unmixed* target window
    ForwardTrace trace = forward(fx.pretrained, in.tf_prev, in.tf_cur, in.t_flow);
    const double want_self = cross_entropy_loss(trace.fused, in.pseudo).loss;

    StepReport rep = train_step(state, 0, in.source(), in.target(), in.pseudo);
    CHECK(rep.loss_feature == 0.0);
    CHECK(rep.loss_self == doctest::Approx(want_self).epsilon(1e-12));
    CHECK(state.bank.total_size() == 0);
}

TEST_CASE("kept pseudo fraction is the non-IGNORE share of the pseudo-label") {
    auto& fx = fixture();
    StepInputs in(fx);
    size_t kept = 0;
    for (auto v : in.pseudo.data) kept += v != kIgnoreLabel;
    TrainState state = make_train_state(fx.cfg.train, fx.pretrained, fx.dataset().meta().categories);
    StepReport rep = train_step(state, 0, in.source(), in.target(), in.pseudo);
    CHECK(rep.kept_pseudo_fraction ==
          doctest::Approx(static_cast<double>(kept) / in.pseudo.data.size()));
}

TEST_CASE("bank occupancy is non-decreasing and capped") {
    auto& fx = fixture();
    StepInputs in(fx);
    TrainConfig tc = fx.cfg.train;
    tc.bank_capacity = 5;
    TrainState state = make_train_state(tc, fx.pretrained, fx.dataset().meta().categories);

    size_t prev = 0;
    for (long iter = 0; iter < 12; ++iter) {
        train_step(state, iter, in.source(), in.target(), in.pseudo);
        const size_t now = state.bank.total_size();
        CHECK(now >= prev);
        CHECK(now <= 5 * 8);
        prev = now;
    }
    CHECK(prev > 0);
}

TEST_CASE("pretraining with zero iterations returns the initialization untouched") {
    auto& fx = fixture();
    // a second dataset with different content, same seed
    RunConfig other = fx.cfg;
    other.dataset_root = fx.root / "data_other";
    other.world.seed = 999;  // different geometry
    if (!fs::exists(other.dataset_root / "meta.json")) {
        generate_dataset(other.world, other.source_style, other.target_style, 4, 4, 0.5,
                         other.dataset_root);
    }
    TrainConfig tc = fx.cfg.train;
    tc.optim.max_iter = 3;  // 3/4 == 0 iterations
    ModelParams a = pretrain_source_only(tc, fx.dataset(), fx.root / "ckpt_zero_a");
    ModelParams b = pretrain_source_only(tc, Dataset(other.dataset_root), fx.root / "ckpt_zero_b");
    // data was never read: both equal the seed-derived initialization
    CHECK(a.conv1.weights == b.conv1.weights);
    CHECK(a.fusion.bias == b.fusion.bias);
}

TEST_CASE("pretraining is deterministic and leaves a domain gap") {
    auto& fx = fixture();
    ModelParams again = pretrain_source_only(fx.cfg.train, fx.dataset(), fx.root / "ckpt_again");
    CHECK(same_checkpoint(fx.cfg.run_dir / "pretrain", fx.root / "ckpt_again"));

    Dataset ds = fx.dataset();
    std::vector<int> source_probe;
    for (int i = 0; i < ds.meta().n_source; ++i) source_probe.push_back(i);
    const double source_miou =
        evaluate_clips(fx.pretrained, ds, Domain::Source, source_probe).miou;
    const double target_miou =
        evaluate_clips(fx.pretrained, ds, Domain::Target, ds.target_eval_clips()).miou;
    CHECK(source_miou > target_miou);
}

TEST_CASE("self-training runs are bitwise reproducible") {
    auto& fx = fixture();
    TrainConfig tc = fx.cfg.train;
    tc.optim.max_iter = 25;
    Dataset ds = fx.dataset();
    run_self_training(tc, ds, fx.pretrained, pseudo_dir_for(fx.cfg), fx.root / "st_a");
    run_self_training(tc, ds, fx.pretrained, pseudo_dir_for(fx.cfg), fx.root / "st_b");
    CHECK(same_checkpoint(fx.root / "st_a" / "checkpoint", fx.root / "st_b" / "checkpoint"));
    CHECK(file_bytes(fx.root / "st_a" / "train_log.csv") ==
          file_bytes(fx.root / "st_b" / "train_log.csv"));
}

TEST_CASE("a zero feature weight is bitwise identical to discarding the FATC gradient") {
    auto& fx = fixture();
    Dataset ds = fx.dataset();

    TrainConfig with_fatc = fx.cfg.train;
    with_fatc.optim.max_iter = 25;
    with_fatc.lambda_feature = 0.0;
    with_fatc.enable_fatc = true;
    run_self_training(with_fatc, ds, fx.pretrained, pseudo_dir_for(fx.cfg), fx.root / "st_zero");

    TrainConfig without = with_fatc;
    without.enable_fatc = false;
    run_self_training(without, ds, fx.pretrained, pseudo_dir_for(fx.cfg), fx.root / "st_off");

    CHECK(same_checkpoint(fx.root / "st_zero" / "checkpoint", fx.root / "st_off" / "checkpoint"));
}

TEST_CASE("missing pseudo-labels abort self-training") {
    auto& fx = fixture();
    Dataset ds = fx.dataset();
    TrainConfig tc = fx.cfg.train;
    tc.optim.max_iter = 5;
    CHECK_THROWS_WITH_AS(
        run_self_training(tc, ds, fx.pretrained, fx.root / "no_such_pseudo", fx.root / "st_fail"),
        doctest::Contains("missing pseudo-labels"), std::runtime_error);
}

TEST_CASE("the trainer cannot open firewalled target labels") {
    auto& fx = fixture();
    Dataset ds = fx.dataset();
    for (int clip : ds.target_train_clips()) {
        CHECK_THROWS(ds.label(Domain::Target, clip, 0, LabelAccess::Training));
        CHECK_THROWS(ds.label(Domain::Target, clip, 0, LabelAccess::Evaluation));
    }
    // eval clips are readable for evaluation only
    for (int clip : ds.target_eval_clips()) {
        CHECK_THROWS(ds.label(Domain::Target, clip, 0, LabelAccess::Training));
    }
}

TEST_CASE("timing fields are populated and the log files split deterministic from timed") {
    auto& fx = fixture();
    TrainConfig tc = fx.cfg.train;
    tc.optim.max_iter = 5;
    Dataset ds = fx.dataset();
    auto result = run_self_training(tc, ds, fx.pretrained, pseudo_dir_for(fx.cfg), fx.root / "st_t");
    for (const auto& rep : result.reports) {
        CHECK(rep.time_forward > 0.0);
        CHECK(rep.time_backward > 0.0);
    }
    std::ifstream log(fx.root / "st_t" / "train_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "iteration,loss_source,loss_self,loss_feature,total_loss,lr,kept_pseudo_fraction");
    std::ifstream timings(fx.root / "st_t" / "timings.csv");
    std::getline(timings, header);
    CHECK(header == "iteration,time_mix,time_forward,time_backward,time_fatc");
}

}  // TEST_SUITE
