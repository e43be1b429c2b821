#include "sargan/nets.hpp"

#include <cmath>

#include "sargan/image.hpp"
#include "sargan/rng.hpp"

namespace sargan {

int NetworkSpec::skip_count() const {
    int n = 0;
    for (const auto& l : layers)
        if (l.skip_from >= 0) ++n;
    return n;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ContractError(name + ": no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        if (l.in_channels < 1 || l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.pad < 0)
            throw ContractError(name + ": bad layer " + std::to_string(i));
        if (i > 0 && l.in_channels != layers[i - 1].out_channels)
            throw ContractError(name + ": channel chain broken at layer " + std::to_string(i));
        if (l.skip_from >= 0) {
            if (l.skip_from >= static_cast<int>(i))
                throw ContractError(name + ": skip source must precede layer " + std::to_string(i));
            if (layers[l.skip_from].out_channels != l.out_channels)
                throw ContractError(name + ": skip channel mismatch at layer " + std::to_string(i));
            for (std::size_t j = 0; j <= i; ++j)
                if (layers[j].stride != 1)
                    throw ContractError(name + ": skips require stride-1 layers");
        }
    }
    if (head == NetworkHead::DivisionResidualTanh) {
        if (layers.back().out_channels != input_channels())
            throw ContractError(name + ": division residual needs estimate channels == input");
        if (division_eps <= 0) throw ContractError(name + ": division eps must be > 0");
    }
}

namespace {

std::string layer_name(std::size_t i) { return "conv" + std::to_string(i + 1); }

void kaiming_uniform(Tensor& t, int fan_in, SplitMix64& rng) {
    const Real bound = static_cast<Real>(std::sqrt(6.0 / fan_in));
    for (auto& v : t.values) v = static_cast<Real>(rng.next_uniform(-bound, bound));
}

} // namespace

NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    SplitMix64 rng(seed);
    NetworkState state;
    state.layers.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams& p = state.layers[i];
        p.kernel = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
        kaiming_uniform(p.kernel, l.in_channels * l.kernel * l.kernel, rng);
        if (l.has_bias) p.bias = Tensor({l.out_channels});
        if (l.has_bn) {
            p.gamma = Tensor::ones({l.out_channels});
            p.beta = Tensor({l.out_channels});
            p.bn.running_mean = Tensor({l.out_channels});
            p.bn.running_var = Tensor::ones({l.out_channels});
        }
    }
    if (spec.head == NetworkHead::PoolLinearSigmoid) {
        const int feat = spec.layers.back().out_channels;
        state.head_weight = Tensor({spec.head_linear_out, feat});
        kaiming_uniform(state.head_weight, feat, rng);
        state.head_bias = Tensor({spec.head_linear_out});
    }
    return state;
}

std::vector<NamedTensor> named_tensors(const NetworkSpec& spec, NetworkState& state) {
    if (state.layers.size() != spec.layers.size())
        throw ContractError(spec.name + ": state does not match spec");
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerParams& p = state.layers[i];
        const std::string base = spec.name + "." + layer_name(i) + ".";
        out.push_back({base + "kernel", &p.kernel, true});
        if (spec.layers[i].has_bias) out.push_back({base + "bias", &p.bias, true});
        if (spec.layers[i].has_bn) {
            out.push_back({base + "gamma", &p.gamma, true});
            out.push_back({base + "beta", &p.beta, true});
            out.push_back({base + "running_mean", &p.bn.running_mean, false});
            out.push_back({base + "running_var", &p.bn.running_var, false});
        }
    }
    if (spec.head == NetworkHead::PoolLinearSigmoid) {
        out.push_back({spec.name + ".head.weight", &state.head_weight, true});
        out.push_back({spec.name + ".head.bias", &state.head_bias, true});
    }
    return out;
}

std::size_t NetworkState::parameter_count(const NetworkSpec& spec) const {
    std::size_t n = 0;
    for (const auto& nt : named_tensors(spec, const_cast<NetworkState&>(*this)))
        if (nt.trainable) n += nt.tensor->size();
    return n;
}

std::pair<NetworkSpec, NetworkState> build_despeckling_net(std::uint64_t seed, int feature_maps,
                                                           int conv_layers) {
    if (conv_layers < 2) throw ContractError("despeckling net needs at least 2 layers");
    NetworkSpec spec;
    spec.name = "gd";
    spec.head = NetworkHead::DivisionResidualTanh;
    spec.division_eps = Real(1e-3);
    for (int i = 0; i < conv_layers; ++i) {
        LayerSpec l;
        l.in_channels = i == 0 ? 1 : feature_maps;
        l.out_channels = i == conv_layers - 1 ? 1 : feature_maps;
        l.kernel = 3;
        l.stride = 1;
        l.pad = 1;
        // the estimate layer is linear; the first conv skips BN; BN absorbs
        // additive constants, so BN layers carry no bias
        l.has_bn = i > 0 && i < conv_layers - 1;
        l.has_bias = !l.has_bn;
        l.activation = i < conv_layers - 1 ? Activation::Relu : Activation::None;
        spec.layers.push_back(l);
    }
    NetworkState state = init_state(spec, seed);
    // start the speckle estimate exactly at the fading variable's unit mean:
    // a zero-centered estimate flips denominator signs and saturates the
    // division residual, stalling early training
    state.layers.back().kernel = Tensor::zeros(state.layers.back().kernel.shape);
    state.layers.back().bias = Tensor::ones(state.layers.back().bias.shape);
    return {std::move(spec), std::move(state)};
}

std::pair<NetworkSpec, NetworkState> build_colorization_net(std::uint64_t seed, int feature_maps,
                                                            int conv_layers) {
    if (conv_layers < 2) throw ContractError("colorization net needs at least 2 layers");
    NetworkSpec spec;
    spec.name = "gc";
    spec.head = NetworkHead::TanhRescale01;
    for (int i = 0; i < conv_layers; ++i) {
        LayerSpec l;
        l.in_channels = i == 0 ? 1 : feature_maps;
        l.out_channels = i == conv_layers - 1 ? 3 : feature_maps;
        l.kernel = 3;
        l.stride = 1;
        l.pad = 1;
        l.has_bn = i < conv_layers - 1;
        l.has_bias = !l.has_bn;
        l.activation = i < conv_layers - 1 ? Activation::Relu : Activation::None;
        spec.layers.push_back(l);
    }
    // symmetric additive skips: 1->7, 2->6, 3->5 at depth 8 (1-indexed)
    for (int k = 1; k <= 3 && 2 * k < conv_layers; ++k)
        spec.layers[conv_layers - k - 1].skip_from = k - 1;
    NetworkState state = init_state(spec, seed);
    return {std::move(spec), std::move(state)};
}

std::pair<NetworkSpec, NetworkState> build_discriminator(std::uint64_t seed, int base_channels,
                                                         int conv_layers) {
    if (conv_layers < 1) throw ContractError("discriminator needs at least 1 layer");
    NetworkSpec spec;
    spec.name = "d";
    spec.head = NetworkHead::PoolLinearSigmoid;
    spec.head_linear_out = 1;
    spec.min_spatial = 1 << conv_layers;
    int ch = base_channels;
    for (int i = 0; i < conv_layers; ++i) {
        LayerSpec l;
        l.in_channels = i == 0 ? 3 : ch;
        if (i > 0) ch *= 2;
        l.out_channels = ch;
        // 4x4 stride-2 halves even extents exactly; 3x3 would break the
        // integral output-shape contract on the 16x16 minimum input
        l.kernel = 4;
        l.stride = 2;
        l.pad = 1;
        l.has_bn = i > 0;
        l.has_bias = !l.has_bn;
        l.activation = Activation::LeakyRelu;
        l.leaky_slope = Real(0.2);
        spec.layers.push_back(l);
    }
    NetworkState state = init_state(spec, seed);
    return {std::move(spec), std::move(state)};
}

Graph::NodeId network_forward(Graph& g, const NetworkSpec& spec, NetworkState& state,
                              Graph::NodeId input, BnMode bn_mode,
                              std::vector<ParamBinding>* bindings) {
    if (state.layers.size() != spec.layers.size())
        throw ContractError(spec.name + ": state does not match spec");
    const Tensor& in = g.value(input);
    if (in.rank() != 4 || in.shape[1] != spec.input_channels())
        throw DimensionError(spec.name + ": expected {N," +
                             std::to_string(spec.input_channels()) + ",H,W}, got " +
                             in.shape_str());
    if (in.shape[2] < spec.min_spatial || in.shape[3] < spec.min_spatial)
        throw ContractError(spec.name + ": input spatial extent below " +
                            std::to_string(spec.min_spatial));

    const bool track = bindings != nullptr;
    const auto param = [&](Tensor& t, const std::string& name) {
        const Graph::NodeId id = g.leaf(t, track, name);
        if (track) bindings->push_back({name, &t, id});
        return id;
    };

    std::vector<Graph::NodeId> outputs;
    Graph::NodeId x = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams& p = state.layers[i];
        const std::string base = spec.name + "." + layer_name(i) + ".";
        const Graph::NodeId k = param(p.kernel, base + "kernel");
        const Graph::NodeId b = l.has_bias ? param(p.bias, base + "bias") : Graph::kNone;
        x = g.conv2d(x, k, b, l.stride, l.pad);
        g.set_label(x, base + "out");
        if (l.has_bn) {
            const Graph::NodeId gam = param(p.gamma, base + "gamma");
            const Graph::NodeId bet = param(p.beta, base + "beta");
            x = g.batch_norm(x, gam, bet, &p.bn, bn_mode);
            g.set_label(x, base + "bn");
        }
        switch (l.activation) {
        case Activation::Relu: x = g.relu(x); break;
        case Activation::LeakyRelu: x = g.leaky_relu(x, l.leaky_slope); break;
        case Activation::None: break;
        }
        if (l.skip_from >= 0) x = g.add(x, outputs[l.skip_from]);
        outputs.push_back(x);
    }

    switch (spec.head) {
    case NetworkHead::None:
        break;
    case NetworkHead::DivisionResidualTanh:
        x = g.tanh(g.div_eps(input, x, spec.division_eps));
        break;
    case NetworkHead::TanhRescale01:
        x = g.scale_shift(g.tanh(x), Real(0.5), Real(0.5));
        break;
    case NetworkHead::PoolLinearSigmoid: {
        const Graph::NodeId w = param(state.head_weight, spec.name + ".head.weight");
        const Graph::NodeId b = param(state.head_bias, spec.name + ".head.bias");
        x = g.sigmoid(g.linear(g.global_avg_pool(x), w, b));
        break;
    }
    }
    g.set_label(x, spec.name + ".output");
    return x;
}

std::pair<Tensor, Tensor> generator_forward(const NetworkSpec& gd_spec, NetworkState& gd,
                                            const NetworkSpec& gc_spec, NetworkState& gc,
                                            const Tensor& y) {
    if (y.rank() != 3 || y.shape[0] != 1)
        throw DimensionError("generator: expected {1,H,W}, got " + y.shape_str());
    Graph g;
    const Graph::NodeId in = g.leaf(stack_batch({&y}));
    const Graph::NodeId despeckled = network_forward(g, gd_spec, gd, in, BnMode::Eval);
    const Graph::NodeId colorized = network_forward(g, gc_spec, gc, despeckled, BnMode::Eval);
    return {slice_batch(g.value(despeckled), 0), slice_batch(g.value(colorized), 0)};
}

Graph::NodeId l1_loss(Graph& g, Graph::NodeId estimate, Graph::NodeId target) {
    return g.mean(g.abs(g.sub(estimate, target)));
}

Graph::NodeId adversarial_loss_g(Graph& g, Graph::NodeId d_outputs) {
    const Graph::NodeId safe = g.clamp(d_outputs, kLogClamp, Real(1) - kLogClamp);
    return g.scale_shift(g.mean(g.log(safe)), Real(-1), Real(0));
}

Graph::NodeId discriminator_loss(Graph& g, Graph::NodeId d_real, Graph::NodeId d_fake) {
    const Graph::NodeId real_term =
        g.mean(g.log(g.clamp(d_real, kLogClamp, Real(1) - kLogClamp)));
    const Graph::NodeId fake_term = g.mean(
        g.log(g.clamp(g.scale_shift(d_fake, Real(-1), Real(1)), kLogClamp, Real(1) - kLogClamp)));
    return g.scale_shift(g.add(real_term, fake_term), Real(-1), Real(0));
}

double l1_loss_value(const Tensor& estimate, const Tensor& target) {
    check_same_shape(estimate, target, "l1_loss");
    double acc = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i)
        acc += std::abs(static_cast<double>(estimate.values[i]) -
                        static_cast<double>(target.values[i]));
    return acc / static_cast<double>(estimate.size());
}

double adversarial_loss_g_value(const std::vector<double>& d_outputs) {
    if (d_outputs.empty()) throw ContractError("adversarial_loss_g: empty batch");
    double acc = 0;
    for (double d : d_outputs)
        acc += std::log(std::min(1.0 - kLogClamp, std::max<double>(kLogClamp, d)));
    return -acc / static_cast<double>(d_outputs.size());
}

double discriminator_loss_value(const std::vector<double>& d_real,
                                const std::vector<double>& d_fake) {
    if (d_real.empty() || d_fake.empty()) throw ContractError("discriminator_loss: empty batch");
    double acc_r = 0, acc_f = 0;
    for (double d : d_real)
        acc_r += std::log(std::min(1.0 - kLogClamp, std::max<double>(kLogClamp, d)));
    for (double d : d_fake)
        acc_f += std::log(std::min(1.0 - kLogClamp, std::max<double>(kLogClamp, 1.0 - d)));
    return -acc_r / static_cast<double>(d_real.size()) -
           acc_f / static_cast<double>(d_fake.size());
}

GanModel GanModel::create(std::uint64_t seed) {
    GanModel m;
    auto [gds, gdt] = build_despeckling_net(seed);
    auto [gcs, gct] = build_colorization_net(seed + 1);
    auto [ds, dt] = build_discriminator(seed + 2);
    m.gd_spec = std::move(gds);
    m.gd = std::move(gdt);
    m.gc_spec = std::move(gcs);
    m.gc = std::move(gct);
    m.d_spec = std::move(ds);
    m.d = std::move(dt);
    return m;
}

GanModel GanModel::create_sized(std::uint64_t seed, int feature_maps, int g_layers,
                                int d_base_channels, int d_layers) {
    GanModel m;
    auto [gds, gdt] = build_despeckling_net(seed, feature_maps, g_layers);
    auto [gcs, gct] = build_colorization_net(seed + 1, feature_maps, g_layers);
    auto [ds, dt] = build_discriminator(seed + 2, d_base_channels, d_layers);
    m.gd_spec = std::move(gds);
    m.gd = std::move(gdt);
    m.gc_spec = std::move(gcs);
    m.gc = std::move(gct);
    m.d_spec = std::move(ds);
    m.d = std::move(dt);
    return m;
}

namespace {

struct GanLosses {
    double l_d = 0, l_c_l1 = 0, l_c_adv = 0;
};

GanLosses eval_losses(GanModel& m, const Tensor& y, const Tensor& x_rgb,
                      const LossWeights& w) {
    if (y.rank() != 3 || y.shape[0] != 1)
        throw DimensionError("loss: y must be {1,H,W}, got " + y.shape_str());
    if (x_rgb.rank() != 3 || x_rgb.shape[0] != 3)
        throw DimensionError("loss: x must be {3,H,W}, got " + x_rgb.shape_str());
    Graph g;
    const Tensor gray_x = gray_bt601(x_rgb);
    const Graph::NodeId in = g.leaf(stack_batch({&y}));
    const Graph::NodeId target_gray = g.leaf(stack_batch({&gray_x}));
    const Graph::NodeId target_rgb = g.leaf(stack_batch({&x_rgb}));
    const Graph::NodeId despeckled = network_forward(g, m.gd_spec, m.gd, in, BnMode::Eval);
    const Graph::NodeId colorized = network_forward(g, m.gc_spec, m.gc, despeckled, BnMode::Eval);
    GanLosses out;
    out.l_d = g.value(l1_loss(g, despeckled, target_gray)).scalar();
    out.l_c_l1 = g.value(l1_loss(g, colorized, target_rgb)).scalar();
    if (w.lambda_a != 0) {
        const Graph::NodeId d_out = network_forward(g, m.d_spec, m.d, colorized, BnMode::Eval);
        out.l_c_adv = g.value(adversarial_loss_g(g, d_out)).scalar();
    }
    return out;
}

} // namespace

double loss_despeckle(GanModel& m, const Tensor& y, const Tensor& x_rgb) {
    return eval_losses(m, y, x_rgb, LossWeights{0}).l_d;
}

double loss_colorize(GanModel& m, const Tensor& y, const Tensor& x_rgb, const LossWeights& w) {
    const GanLosses l = eval_losses(m, y, x_rgb, w);
    return l.l_c_l1 + w.lambda_a * l.l_c_adv;
}

double loss_total(GanModel& m, const Tensor& y, const Tensor& x_rgb, const LossWeights& w) {
    const GanLosses l = eval_losses(m, y, x_rgb, w);
    return l.l_d + l.l_c_l1 + w.lambda_a * l.l_c_adv;
}

Tensor stack_batch(const std::vector<const Tensor*>& images) {
    if (images.empty()) throw ContractError("stack_batch: empty batch");
    const Tensor& first = *images.front();
    if (first.rank() != 3) throw DimensionError("stack_batch: images must be rank 3");
    Tensor out({static_cast<int>(images.size()), first.shape[0], first.shape[1], first.shape[2]});
    const std::size_t per = first.size();
    for (std::size_t i = 0; i < images.size(); ++i) {
        check_same_shape(*images[i], first, "stack_batch");
        std::copy(images[i]->values.begin(), images[i]->values.end(),
                  out.values.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

Tensor slice_batch(const Tensor& batch, int index) {
    if (batch.rank() != 4) throw DimensionError("slice_batch: batch must be rank 4");
    if (index < 0 || index >= batch.shape[0]) throw ContractError("slice_batch: index out of range");
    Tensor out({batch.shape[1], batch.shape[2], batch.shape[3]});
    const std::size_t per = out.size();
    std::copy(batch.values.begin() + static_cast<std::ptrdiff_t>(index * per),
              batch.values.begin() + static_cast<std::ptrdiff_t>((index + 1) * per),
              out.values.begin());
    return out;
}

} // namespace sargan
