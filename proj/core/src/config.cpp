#include "davss/config.hpp"

#include <fstream>

#include "json.hpp"

#include "davss/rng.hpp"

namespace davss {

namespace {

using nlohmann::json;

ClassFilter parse_filter(const std::string& s) {
    if (s == "all") return ClassFilter::All;
    if (s == "things") return ClassFilter::Things;
    if (s == "stuffs") return ClassFilter::Stuffs;
    if (s == "movable") return ClassFilter::Movable;
    if (s == "stationary") return ClassFilter::Stationary;
    throw std::invalid_argument("config: unknown class_filter " + s);
}

std::string filter_name(ClassFilter f) {
    switch (f) {
        case ClassFilter::All: return "all";
        case ClassFilter::Things: return "things";
        case ClassFilter::Stuffs: return "stuffs";
        case ClassFilter::Movable: return "movable";
        case ClassFilter::Stationary: return "stationary";
    }
    return "all";
}

DomainStyle parse_style(const json& j, DomainStyle base) {
    if (j.contains("palette")) {
        base.palette.clear();
        for (const auto& row : j.at("palette")) {
            base.palette.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                                    row.at(2).get<double>()});
        }
    }
    base.noise_sigma = j.value("noise_sigma", base.noise_sigma);
    base.gamma = j.value("gamma", base.gamma);
    return base;
}

json style_json(const DomainStyle& s) {
    json j;
    j["palette"] = json::array();
    for (const auto& c : s.palette) j["palette"].push_back({c[0], c[1], c[2]});
    j["noise_sigma"] = s.noise_sigma;
    j["gamma"] = s.gamma;
    return j;
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& json_text) {
    RunConfig cfg;
    json j = json::parse(json_text);

    cfg.dataset_root = j.value("dataset_root", cfg.dataset_root.string());
    cfg.run_dir = j.value("run_dir", cfg.run_dir.string());
    cfg.n_source = j.value("n_source", cfg.n_source);
    cfg.n_target = j.value("n_target", cfg.n_target);
    cfg.eval_fraction = j.value("eval_fraction", cfg.eval_fraction);

    if (j.contains("world")) {
        const json& w = j.at("world");
        cfg.world.num_classes = w.value("num_classes", cfg.world.num_classes);
        cfg.world.clip_length = w.value("clip_length", cfg.world.clip_length);
        cfg.world.height = w.value("height", cfg.world.height);
        cfg.world.width = w.value("width", cfg.world.width);
        if (w.contains("scroll")) {
            cfg.world.scroll_dx = w.at("scroll").at(0).get<int>();
            cfg.world.scroll_dy = w.at("scroll").at(1).get<int>();
        }
        cfg.world.object_speed_max = w.value("object_speed_max", cfg.world.object_speed_max);
        cfg.world.min_objects = w.value("min_objects", cfg.world.min_objects);
        cfg.world.max_objects = w.value("max_objects", cfg.world.max_objects);
        if (w.contains("rarity_weights")) {
            cfg.world.rarity_weights = w.at("rarity_weights").get<std::vector<double>>();
        }
    }
    if (j.contains("source_style")) cfg.source_style = parse_style(j.at("source_style"), cfg.source_style);
    if (j.contains("target_style")) cfg.target_style = parse_style(j.at("target_style"), cfg.target_style);

    if (j.contains("train")) {
        const json& t = j.at("train");
        TrainConfig& tc = cfg.train;
        tc.optim.lr0 = t.value("lr0", tc.optim.lr0);
        tc.optim.momentum = t.value("momentum", tc.optim.momentum);
        tc.optim.weight_decay = t.value("weight_decay", tc.optim.weight_decay);
        tc.optim.poly_power = t.value("poly_power", tc.optim.poly_power);
        tc.optim.max_iter = t.value("max_iter", tc.optim.max_iter);
        tc.lambda_mix = t.value("lambda_mix", tc.lambda_mix);
        tc.lambda_feature = t.value("lambda_feature", tc.lambda_feature);
        tc.bank_capacity = t.value("bank_capacity", tc.bank_capacity);
        tc.feature_dim = t.value("feature_dim", tc.feature_dim);
        tc.enable_cmom = t.value("enable_cmom", tc.enable_cmom);
        tc.enable_fatc = t.value("enable_fatc", tc.enable_fatc);
        if (t.contains("mixer_kind")) {
            const std::string kind = t.at("mixer_kind").get<std::string>();
            if (kind == "cmom") {
                tc.mixer_kind = MixerKind::Cmom;
            } else if (kind == "dacs") {
                tc.mixer_kind = MixerKind::Dacs;
            } else {
                throw std::invalid_argument("config: unknown mixer_kind " + kind);
            }
        }
        if (t.contains("fatc_class_reduction")) {
            const std::string red = t.at("fatc_class_reduction").get<std::string>();
            if (red == "sum") {
                tc.fatc_class_reduction = ClassReduction::Sum;
            } else if (red == "mean") {
                tc.fatc_class_reduction = ClassReduction::Mean;
            } else {
                throw std::invalid_argument("config: unknown fatc_class_reduction " + red);
            }
        }
        if (t.contains("mix")) {
            const json& m = t.at("mix");
            tc.mix.class_ratio = m.value("class_ratio", tc.mix.class_ratio);
            tc.mix.tau = m.value("tau", tc.mix.tau);
            if (m.contains("class_filter")) tc.mix.class_filter = parse_filter(m.at("class_filter"));
        }
        if (t.contains("pseudo")) {
            const json& p = t.at("pseudo");
            tc.pseudo.alpha = p.value("alpha", tc.pseudo.alpha);
            tc.pseudo.beta = p.value("beta", tc.pseudo.beta);
            tc.pseudo.gamma = p.value("gamma", tc.pseudo.gamma);
            tc.pseudo.init_threshold = p.value("init_threshold", tc.pseudo.init_threshold);
        }
    }

    apply_seed(cfg, j.value("seed", cfg.seed));
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["dataset_root"] = cfg.dataset_root.string();
    j["run_dir"] = cfg.run_dir.string();
    j["n_source"] = cfg.n_source;
    j["n_target"] = cfg.n_target;
    j["eval_fraction"] = cfg.eval_fraction;
    j["world"] = {{"num_classes", cfg.world.num_classes},
                  {"clip_length", cfg.world.clip_length},
                  {"height", cfg.world.height},
                  {"width", cfg.world.width},
                  {"scroll", {cfg.world.scroll_dx, cfg.world.scroll_dy}},
                  {"object_speed_max", cfg.world.object_speed_max},
                  {"min_objects", cfg.world.min_objects},
                  {"max_objects", cfg.world.max_objects},
                  {"rarity_weights", cfg.world.rarity_weights}};
    j["source_style"] = style_json(cfg.source_style);
    j["target_style"] = style_json(cfg.target_style);
    j["train"] = {{"lr0", cfg.train.optim.lr0},
                  {"momentum", cfg.train.optim.momentum},
                  {"weight_decay", cfg.train.optim.weight_decay},
                  {"poly_power", cfg.train.optim.poly_power},
                  {"max_iter", cfg.train.optim.max_iter},
                  {"lambda_mix", cfg.train.lambda_mix},
                  {"lambda_feature", cfg.train.lambda_feature},
                  {"bank_capacity", cfg.train.bank_capacity},
                  {"feature_dim", cfg.train.feature_dim},
                  {"enable_cmom", cfg.train.enable_cmom},
                  {"enable_fatc", cfg.train.enable_fatc},
                  {"mixer_kind", cfg.train.mixer_kind == MixerKind::Cmom ? "cmom" : "dacs"},
                  {"fatc_class_reduction",
                   cfg.train.fatc_class_reduction == ClassReduction::Sum ? "sum" : "mean"},
                  {"mix",
                   {{"class_ratio", cfg.train.mix.class_ratio},
                    {"class_filter", filter_name(cfg.train.mix.class_filter)},
                    {"tau", cfg.train.mix.tau}}},
                  {"pseudo",
                   {{"alpha", cfg.train.pseudo.alpha},
                    {"beta", cfg.train.pseudo.beta},
                    {"gamma", cfg.train.pseudo.gamma},
                    {"init_threshold", cfg.train.pseudo.init_threshold}}}};
    return j.dump(2);
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.world.seed = seed;
    cfg.train.seed = derive_seed(seed, 0x7281);
    cfg.train.mix.rng_seed = derive_seed(seed, 0x88f1);
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = run_config_json(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_run_manifest(const std::filesystem::path& run_dir, const RunConfig& cfg,
                        const std::vector<std::string>& outputs, const std::string& tool_version) {
    std::filesystem::create_directories(run_dir);
    json j;
    j["config_hash"] = config_hash(cfg);
    j["dataset"] = cfg.dataset_root.string();
    j["seed"] = cfg.seed;
    j["tool_version"] = tool_version;
    j["outputs"] = outputs;
    std::ofstream out(run_dir / "run_manifest.json");
    out << j.dump(2) << "\n";
}

}  // namespace davss
