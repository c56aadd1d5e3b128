#include "davss/segmodel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "davss/rng.hpp"
#include "davss/tensor.hpp"

namespace davss {

namespace {

constexpr int kMaxChannels = 32;

ConvLayer make_layer(int in_ch, int out_ch, int ksize, std::mt19937_64& rng) {
    ConvLayer l;
    l.in_ch = in_ch;
    l.out_ch = out_ch;
    l.ksize = ksize;
    l.weights.resize(static_cast<size_t>(ksize) * ksize * in_ch * out_ch);
    l.bias.assign(out_ch, 0.0);
    // He-uniform: keeps activation variance near unity through the rectifier
    // stack, which the fixed learning rate and short schedule depend on.
    const double s = std::sqrt(6.0 / (static_cast<double>(ksize) * ksize * in_ch));
    std::uniform_real_distribution<double> dist(-s, s);
    for (double& w : l.weights) w = dist(rng);
    for (double& b : l.bias) b = dist(rng);
    return l;
}

void conv_forward_generic(const FeatureMap& in, const ConvLayer& layer, FeatureMap& out) {
    const int h = in.height, w = in.width;
    const int oc = layer.out_ch, ic = layer.in_ch, k = layer.ksize;
    const int pad = k / 2;
    out = FeatureMap(h, w, oc);
    require(oc <= kMaxChannels, "conv_forward: too many output channels");

    const double* __restrict weights = layer.weights.data();
    double acc[kMaxChannels];
    for (int y = 0; y < h; ++y) {
        const bool y_interior = y >= pad && y < h - pad;
        for (int x = 0; x < w; ++x) {
            for (int o = 0; o < oc; ++o) acc[o] = layer.bias[o];
            const bool interior = y_interior && x >= pad && x < w - pad;
            for (int ky = 0; ky < k; ++ky) {
                const int sy = y + ky - pad;
                if (!interior && (sy < 0 || sy >= h)) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int sx = x + kx - pad;
                    if (!interior && (sx < 0 || sx >= w)) continue;
                    const double* __restrict src = in.cell(sy, sx);
                    const double* __restrict wrow =
                        weights + (static_cast<size_t>(ky) * k + kx) * ic * oc;
                    for (int i = 0; i < ic; ++i) {
                        const double v = src[i];
                        const double* __restrict ww = wrow + static_cast<size_t>(i) * oc;
                        for (int o = 0; o < oc; ++o) acc[o] += v * ww[o];
                    }
                }
            }
            double* __restrict dst = out.cell(y, x);
            for (int o = 0; o < oc; ++o) dst[o] = acc[o];
        }
    }
}

void conv_forward(const FeatureMap& in, const ConvLayer& layer, FeatureMap& out) {
    require(in.dim == layer.in_ch, "conv_forward: channel mismatch");
    conv_forward_generic(in, layer, out);
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv_backward_generic(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& grad_out,
                           ConvLayer& grad_layer, FeatureMap* grad_in) {
    const int h = in.height, w = in.width;
    const int oc = layer.out_ch, ic = layer.in_ch, k = layer.ksize;
    const int pad = k / 2;
    if (grad_in) *grad_in = FeatureMap(h, w, ic);

    const double* __restrict weights = layer.weights.data();
    double* __restrict gweights = grad_layer.weights.data();
    double gi_acc[kMaxChannels];
    for (int y = 0; y < h; ++y) {
        const bool y_interior = y >= pad && y < h - pad;
        for (int x = 0; x < w; ++x) {
            const double* __restrict g = grad_out.cell(y, x);
            for (int o = 0; o < oc; ++o) grad_layer.bias[o] += g[o];
            const bool interior = y_interior && x >= pad && x < w - pad;
            for (int ky = 0; ky < k; ++ky) {
                const int sy = y + ky - pad;
                if (!interior && (sy < 0 || sy >= h)) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int sx = x + kx - pad;
                    if (!interior && (sx < 0 || sx >= w)) continue;
                    const double* __restrict src = in.cell(sy, sx);
                    double* __restrict gw = gweights + (static_cast<size_t>(ky) * k + kx) * ic * oc;
                    for (int i = 0; i < ic; ++i) {
                        const double v = src[i];
                        double* __restrict gwrow = gw + static_cast<size_t>(i) * oc;
                        for (int o = 0; o < oc; ++o) gwrow[o] += v * g[o];
                    }
                    if (grad_in) {
                        const double* __restrict ww =
                            weights + (static_cast<size_t>(ky) * k + kx) * ic * oc;
                        for (int i = 0; i < ic; ++i) {
                            const double* __restrict wwrow = ww + static_cast<size_t>(i) * oc;
                            double dot = 0.0;
                            for (int o = 0; o < oc; ++o) dot += wwrow[o] * g[o];
                            gi_acc[i] = dot;
                        }
                        double* __restrict gi = grad_in->cell(sy, sx);
                        for (int i = 0; i < ic; ++i) gi[i] += gi_acc[i];
                    }
                }
            }
        }
    }
}

// 3x3 backward split into (a) the input gradient as a correlation with a
// flipped weight layout, reusing the forward kernel, and (b) tap-major
// weight gradients over branch-free valid rectangles.
void conv3x3_backward_split(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& grad_out,
                            ConvLayer& grad_layer, FeatureMap* grad_in) {
    const int h = in.height, w = in.width;
    const int oc = layer.out_ch, ic = layer.in_ch;

    for (size_t p = 0; p < grad_out.pixel_count(); ++p) {
        const double* __restrict g = grad_out.data.data() + p * oc;
        for (int o = 0; o < oc; ++o) grad_layer.bias[o] += g[o];
    }

    for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y_lo = std::max(0, -dy), y_hi = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - 1;
            const int x_lo = std::max(0, -dx), x_hi = std::min(w, w - dx);
            double* __restrict gw = grad_layer.weights.data() + (static_cast<size_t>(ky) * 3 + kx) * ic * oc;
            for (int y = y_lo; y < y_hi; ++y) {
                const double* __restrict src_row = in.data.data() + ((static_cast<size_t>(y + dy)) * w + x_lo + dx) * ic;
                const double* __restrict g_row = grad_out.data.data() + (static_cast<size_t>(y) * w + x_lo) * oc;
                for (int x = x_lo; x < x_hi; ++x) {
                    for (int i = 0; i < ic; ++i) {
                        const double v = src_row[i];
                        double* __restrict gwrow = gw + static_cast<size_t>(i) * oc;
                        for (int o = 0; o < oc; ++o) gwrow[o] += v * g_row[o];
                    }
                    src_row += ic;
                    g_row += oc;
                }
            }
        }
    }

    if (grad_in) {
        // grad_in(q)[i] = sum_{tap,o} W[tap][i][o] * g(q + flip(tap))[o]; with
        // flipped taps and transposed channels this is exactly the forward
        // kernel applied to grad_out.
        ConvLayer flipped;
        flipped.in_ch = oc;
        flipped.out_ch = ic;
        flipped.ksize = 3;
        flipped.bias.assign(ic, 0.0);
        flipped.weights.resize(layer.weights.size());
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* src_blk = layer.weights.data() + (static_cast<size_t>(ky) * 3 + kx) * ic * oc;
                double* dst_blk =
                    flipped.weights.data() + (static_cast<size_t>(2 - ky) * 3 + (2 - kx)) * oc * ic;
                for (int i = 0; i < ic; ++i) {
                    for (int o = 0; o < oc; ++o) {
                        dst_blk[static_cast<size_t>(o) * ic + i] = src_blk[static_cast<size_t>(i) * oc + o];
                    }
                }
            }
        }
        FeatureMap gi;
        conv_forward_generic(grad_out, flipped, gi);
        *grad_in = std::move(gi);
    }
}

void conv_backward(const FeatureMap& in, const ConvLayer& layer, const FeatureMap& grad_out,
                   ConvLayer& grad_layer, FeatureMap* grad_in) {
    if (layer.ksize == 3) {
        return conv3x3_backward_split(in, layer, grad_out, grad_layer, grad_in);
    }
    conv_backward_generic(in, layer, grad_out, grad_layer, grad_in);
}

// Leaky rectifier; the small negative slope keeps units trainable when one
// class dominates early updates.
constexpr double kRectifierLeak = 0.01;

void relu_forward(const FeatureMap& pre, FeatureMap& act) {
    act = pre;
    for (double& v : act.data) v = v > 0.0 ? v : kRectifierLeak * v;
}

void relu_backward(const FeatureMap& pre, FeatureMap& grad) {
    for (size_t i = 0; i < grad.data.size(); ++i) {
        if (pre.data[i] <= 0.0) grad.data[i] *= kRectifierLeak;
    }
}

// Frames arrive in [0,1]; the net sees standardized inputs (fixed dataset
// statistics: mean 0.5, std 0.3).
FeatureMap frame_as_map(const Frame& f) {
    FeatureMap m(f.height, f.width, f.channels);
    for (size_t i = 0; i < f.data.size(); ++i) m.data[i] = (f.data[i] - 0.5) / 0.3;
    return m;
}

}  // namespace

ModelParams init_params(int num_classes, int feature_dim, std::uint64_t seed) {
    require(num_classes >= 2, "init_params: need at least two classes");
    ModelParams p;
    p.num_classes = num_classes;
    p.feature_dim = feature_dim;
    auto rng = make_rng(seed, 0x5eed);
    p.conv1 = make_layer(3, feature_dim, 3, rng);
    p.conv2 = make_layer(feature_dim, feature_dim, 3, rng);
    p.classifier = make_layer(feature_dim, num_classes, 1, rng);
    p.fusion = make_layer(2 * num_classes, num_classes, 1, rng);
    return p;
}

void for_each_tensor(ModelParams& p,
                     const std::function<void(const std::string&, std::vector<double>&,
                                              std::vector<std::uint32_t>)>& fn) {
    auto dims = [](const ConvLayer& l) {
        return std::vector<std::uint32_t>{static_cast<std::uint32_t>(l.ksize),
                                          static_cast<std::uint32_t>(l.ksize),
                                          static_cast<std::uint32_t>(l.in_ch),
                                          static_cast<std::uint32_t>(l.out_ch)};
    };
    fn("conv1.weights", p.conv1.weights, dims(p.conv1));
    fn("conv1.bias", p.conv1.bias, {static_cast<std::uint32_t>(p.conv1.out_ch)});
    fn("conv2.weights", p.conv2.weights, dims(p.conv2));
    fn("conv2.bias", p.conv2.bias, {static_cast<std::uint32_t>(p.conv2.out_ch)});
    fn("classifier.weights", p.classifier.weights, dims(p.classifier));
    fn("classifier.bias", p.classifier.bias, {static_cast<std::uint32_t>(p.classifier.out_ch)});
    fn("fusion.weights", p.fusion.weights, dims(p.fusion));
    fn("fusion.bias", p.fusion.bias, {static_cast<std::uint32_t>(p.fusion.out_ch)});
}

void for_each_tensor(const ModelParams& p,
                     const std::function<void(const std::string&, const std::vector<double>&,
                                              std::vector<std::uint32_t>)>& fn) {
    for_each_tensor(const_cast<ModelParams&>(p),
                    [&](const std::string& name, std::vector<double>& values,
                        std::vector<std::uint32_t> dims) { fn(name, values, std::move(dims)); });
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = p;
    for_each_tensor(z, [](const std::string&, std::vector<double>& v, std::vector<std::uint32_t>) {
        std::fill(v.begin(), v.end(), 0.0);
    });
    return z;
}

ForwardTrace forward(const ModelParams& params, const Frame& frame_prev, const Frame& frame_cur,
                     const FlowField& flow) {
    require(frame_prev.height == frame_cur.height && frame_prev.width == frame_cur.width,
            "forward: frame shape mismatch");
    require(frame_prev.height == flow.height && frame_prev.width == flow.width,
            "forward: flow shape mismatch");

    ForwardTrace t;
    t.height = frame_cur.height;
    t.width = frame_cur.width;
    t.flow = flow;
    const Frame* frames[2] = {&frame_prev, &frame_cur};

    for (int s = 0; s < 2; ++s) {
        t.input[s] = frame_as_map(*frames[s]);
        conv_forward(t.input[s], params.conv1, t.pre1[s]);
        relu_forward(t.pre1[s], t.act1[s]);
        conv_forward(t.act1[s], params.conv2, t.pre2[s]);
        relu_forward(t.pre2[s], t.features[s]);
        conv_forward(t.features[s], params.classifier, t.logits[s]);
    }

    t.warped_prev_logits = warp_backward_bilinear(t.logits[0], flow);

    // Channel-concatenate current scores with warped previous scores and run
    // the 1x1 fusion. Invalid warp pixels are already zero-filled.
    const int c = params.num_classes;
    FeatureMap fused_in(t.height, t.width, 2 * c);
    for (size_t p = 0; p < fused_in.pixel_count(); ++p) {
        double* dst = fused_in.data.data() + p * 2 * c;
        const double* cur = t.logits[1].data.data() + p * c;
        const double* prev = t.warped_prev_logits.warped.data.data() + p * c;
        std::memcpy(dst, cur, sizeof(double) * c);
        std::memcpy(dst + c, prev, sizeof(double) * c);
    }
    conv_forward(fused_in, params.fusion, t.fused);
    return t;
}

void backward(const ModelParams& params, const ForwardTrace& trace, const FeatureMap& grad_fused,
              const FeatureMap* grad_features_cur, ModelParams& grads) {
    const int c = params.num_classes;
    const int h = trace.height, w = trace.width;
    require(grad_fused.height == h && grad_fused.width == w && grad_fused.dim == c,
            "backward: grad_fused shape mismatch");

    // Fusion layer: rebuild its input, then split the input gradient into
    // the current-scores path and the warped-previous-scores path.
    FeatureMap fused_in(h, w, 2 * c);
    for (size_t p = 0; p < fused_in.pixel_count(); ++p) {
        double* dst = fused_in.data.data() + p * 2 * c;
        std::memcpy(dst, trace.logits[1].data.data() + p * c, sizeof(double) * c);
        std::memcpy(dst + c, trace.warped_prev_logits.warped.data.data() + p * c, sizeof(double) * c);
    }
    FeatureMap grad_fused_in;
    conv_backward(fused_in, params.fusion, grad_fused, grads.fusion, &grad_fused_in);

    FeatureMap grad_logits[2] = {FeatureMap(h, w, c), FeatureMap(h, w, c)};
    FeatureMap grad_warped(h, w, c);
    for (size_t p = 0; p < grad_fused_in.pixel_count(); ++p) {
        const double* g = grad_fused_in.data.data() + p * 2 * c;
        std::memcpy(grad_logits[1].data.data() + p * c, g, sizeof(double) * c);
        std::memcpy(grad_warped.data.data() + p * c, g + c, sizeof(double) * c);
    }

    // Warping reads from the previous-frame scores; push the gradient back
    // through the bilinear taps. Invalid pixels delivered zeros, and the
    // adjoint skips them the same way.
    grad_logits[0] = warp_backward_bilinear_adjoint(grad_warped, trace.flow);

    for (int s = 1; s >= 0; --s) {
        FeatureMap grad_features;
        conv_backward(trace.features[s], params.classifier, grad_logits[s], grads.classifier,
                      &grad_features);
        if (s == 1 && grad_features_cur) {
            require(grad_features_cur->data.size() == grad_features.data.size(),
                    "backward: injected feature gradient shape mismatch");
            for (size_t i = 0; i < grad_features.data.size(); ++i) {
                grad_features.data[i] += grad_features_cur->data[i];
            }
        }
        relu_backward(trace.pre2[s], grad_features);
        FeatureMap grad_act1;
        conv_backward(trace.act1[s], params.conv2, grad_features, grads.conv2, &grad_act1);
        relu_backward(trace.pre1[s], grad_act1);
        conv_backward(trace.input[s], params.conv1, grad_act1, grads.conv1, nullptr);
    }
}

CrossEntropyResult cross_entropy_loss(const FeatureMap& logits, const LabelMap& label) {
    require(logits.height == label.height && logits.width == label.width,
            "cross_entropy_loss: shape mismatch");
    const int c = logits.dim;
    CrossEntropyResult res;
    res.grad = FeatureMap(logits.height, logits.width, c);

    size_t n_valid = 0;
    for (std::uint8_t v : label.data) n_valid += v != kIgnoreLabel;
    if (n_valid == 0) return res;
    const double inv_n = 1.0 / static_cast<double>(n_valid);

    double loss = 0.0;
    for (size_t p = 0; p < label.data.size(); ++p) {
        const std::uint8_t y = label.data[p];
        if (y == kIgnoreLabel) continue;
        require(y < c, "cross_entropy_loss: class id out of range");
        const double* z = logits.data.data() + p * c;
        double zmax = z[0];
        for (int k = 1; k < c; ++k) zmax = std::max(zmax, z[k]);
        double sum = 0.0;
        for (int k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
        const double log_sum = std::log(sum) + zmax;
        loss += log_sum - z[y];

        double* g = res.grad.data.data() + p * c;
        for (int k = 0; k < c; ++k) g[k] = std::exp(z[k] - log_sum) * inv_n;
        g[y] -= inv_n;
    }
    res.loss = loss * inv_n;
    return res;
}

LabelMap argmax_map(const FeatureMap& logits, int num_classes) {
    LabelMap out(logits.height, logits.width, num_classes);
    const int c = logits.dim;
    for (size_t p = 0; p < out.data.size(); ++p) {
        const double* z = logits.data.data() + p * c;
        int best = 0;
        for (int k = 1; k < c; ++k) {
            if (z[k] > z[best]) best = k;
        }
        out.data[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

std::pair<LabelMap, std::vector<double>> predict_with_confidence(const FeatureMap& logits,
                                                                 int num_classes) {
    LabelMap pred = argmax_map(logits, num_classes);
    std::vector<double> conf(pred.data.size(), 0.0);
    const int c = logits.dim;
    for (size_t p = 0; p < pred.data.size(); ++p) {
        const double* z = logits.data.data() + p * c;
        const double zmax = z[pred.data[p]];
        double sum = 0.0;
        for (int k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
        conf[p] = 1.0 / sum;
    }
    return {std::move(pred), std::move(conf)};
}

double poly_lr(const OptimConfig& cfg, long iter) {
    if (iter >= cfg.max_iter) throw std::out_of_range("poly_lr: iteration past the schedule end");
    return cfg.lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(cfg.max_iter),
                              cfg.poly_power);
}

void sgd_step(ModelParams& params, const ModelParams& grads, SgdState& state, long iter,
              const OptimConfig& cfg) {
    const double lr = poly_lr(cfg, iter);

    std::vector<std::vector<double>*> param_tensors, grad_tensors;
    for_each_tensor(params, [&](const std::string&, std::vector<double>& v, std::vector<std::uint32_t>) {
        param_tensors.push_back(&v);
    });
    for_each_tensor(const_cast<ModelParams&>(grads),
                    [&](const std::string&, std::vector<double>& v, std::vector<std::uint32_t>) {
                        grad_tensors.push_back(&v);
                    });
    if (state.velocity.empty()) {
        for (auto* t : param_tensors) state.velocity.emplace_back(t->size(), 0.0);
    }

    for (size_t t = 0; t < param_tensors.size(); ++t) {
        auto& p = *param_tensors[t];
        const auto& g = *grad_tensors[t];
        auto& v = state.velocity[t];
        require(p.size() == g.size() && p.size() == v.size(), "sgd_step: tensor shape mismatch");
        for (size_t i = 0; i < p.size(); ++i) {
            v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
            p[i] -= lr * v[i];
        }
    }
}

void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params, long iteration) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["iteration"] = iteration;
    manifest["num_classes"] = params.num_classes;
    manifest["feature_dim"] = params.feature_dim;
    nlohmann::json tensors = nlohmann::json::array();
    for_each_tensor(params, [&](const std::string& name, const std::vector<double>& values,
                                std::vector<std::uint32_t> dims) {
        std::string file = name;
        for (char& ch : file) {
            if (ch == '.') ch = '_';
        }
        file += ".cmt";
        save_f32(dir / file, dims, values);
        tensors.push_back({{"name", name}, {"file", file}, {"dims", dims}});
    });
    manifest["tensors"] = tensors;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

std::pair<ModelParams, long> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("load_checkpoint: missing " + (dir / "manifest.json").string());
    nlohmann::json manifest = nlohmann::json::parse(in);

    ModelParams params = init_params(manifest.at("num_classes").get<int>(),
                                     manifest.at("feature_dim").get<int>(), 0);
    long iteration = manifest.at("iteration").get<long>();

    std::map<std::string, std::string> files;
    for (const auto& t : manifest.at("tensors")) {
        files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
    }
    for_each_tensor(params, [&](const std::string& name, std::vector<double>& values,
                                std::vector<std::uint32_t>) {
        auto it = files.find(name);
        if (it == files.end()) throw std::runtime_error("load_checkpoint: manifest lacks tensor " + name);
        auto [dims, loaded] = load_f32(dir / it->second);
        if (loaded.size() != values.size()) {
            throw std::runtime_error("load_checkpoint: size mismatch for " + name);
        }
        values = std::move(loaded);
    });
    return {std::move(params), iteration};
}

}  // namespace davss
