#include "sargan/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <iomanip>

#include "sargan/image.hpp"
#include "sargan/rng.hpp"
#include "sargan/serialize.hpp"
#include "sargan/speckle.hpp"

namespace sargan {

void TrainConfig::validate() const {
    if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lambda_a < 0) throw ConfigError("train: lambda_a must be >= 0");
    if (looks < 1) throw ConfigError("train: looks must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (image_size < 16) throw ConfigError("train: image_size must be >= 16");
    if (d_steps_per_g_step < 1) throw ConfigError("train: d_steps_per_g_step must be >= 1");
}

void AdamState::init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    t = 0;
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor* p : params) {
        m.emplace_back(p->shape);
        v.emplace_back(p->shape);
    }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size()) throw ContractError("adam: params/grads size mismatch");
    if (state.empty()) state.init(params);
    if (state.m.size() != params.size())
        throw ContractError("adam: moment buffers do not match parameter list");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t b = 0; b < params.size(); ++b) {
        Tensor& p = *params[b];
        const Tensor& g = *grads[b];
        check_same_shape(p, g, "adam");
        check_same_shape(p, state.m[b], "adam");
        Real* mp = state.m[b].values.data();
        Real* vp = state.v[b].values.data();
        Real* pp = p.values.data();
        const Real* gp = g.values.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            mp[i] = static_cast<Real>(cfg.beta1) * mp[i] +
                    static_cast<Real>(1 - cfg.beta1) * gp[i];
            vp[i] = static_cast<Real>(cfg.beta2) * vp[i] +
                    static_cast<Real>(1 - cfg.beta2) * gp[i] * gp[i];
            const double mhat = static_cast<double>(mp[i]) / bc1;
            const double vhat = static_cast<double>(vp[i]) / bc2;
            pp[i] -= static_cast<Real>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

PairDataset make_pair_dataset(const std::vector<Tensor>& clean_rgb, int looks,
                              std::uint64_t seed) {
    if (clean_rgb.empty()) throw ContractError("make_pair_dataset: empty corpus");
    PairDataset ds;
    SplitMix64 master(seed);
    for (const Tensor& x : clean_rgb) {
        if (x.rank() != 3 || x.shape[0] != 3)
            throw DimensionError("make_pair_dataset: clean images must be {3,H,W}, got " +
                                 x.shape_str());
        const std::uint64_t sub_seed = master.next_u64();
        TrainPair p;
        p.x = x;
        const Tensor gray = gray_bt601(x);
        const Tensor field = sample_speckle(gray.shape, SpeckleParams{looks, sub_seed});
        p.y = apply_speckle(gray, field, /*clamp_output=*/false);
        ds.pairs.push_back(std::move(p));
    }
    const std::size_t test = ds.pairs.size() / 10;
    ds.train_count = ds.pairs.size() - test;
    return ds;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream os;
    os << "step,l_d,l_c_l1,l_c_adv,l_total,d_loss\n" << std::setprecision(17);
    for (const TraceRow& r : trace)
        os << r.step << ',' << r.l_d << ',' << r.l_c_l1 << ',' << r.l_c_adv << ',' << r.l_total
           << ',' << r.d_loss << '\n';
    return os.str();
}

namespace {

std::vector<Tensor*> trainable_params(const NetworkSpec& spec, NetworkState& state) {
    std::vector<Tensor*> out;
    for (const NamedTensor& nt : named_tensors(spec, state))
        if (nt.trainable) out.push_back(nt.tensor);
    return out;
}

void check_finite_params(const std::vector<Tensor*>& params, const char* which) {
    for (const Tensor* p : params)
        for (Real v : p->values)
            if (!std::isfinite(v))
                throw NumericError(std::string("train: non-finite parameter after ") + which +
                                   " update");
    (void)which;
}

struct Batch {
    Tensor y;      // {B,1,H,W}
    Tensor x;      // {B,3,H,W}
    Tensor x_gray; // {B,1,H,W}
};

Batch gather_batch(const PairDataset& data, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
    std::vector<const Tensor*> ys, xs;
    std::vector<Tensor> grays;
    grays.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const TrainPair& p = data.train_pair(order[i]);
        ys.push_back(&p.y);
        xs.push_back(&p.x);
        grays.push_back(gray_bt601(p.x));
    }
    std::vector<const Tensor*> gptrs;
    for (const Tensor& g : grays) gptrs.push_back(&g);
    return Batch{stack_batch(ys), stack_batch(xs), stack_batch(gptrs)};
}

// Gradients in binding order; missing grads (unreached parameters) are zero.
std::vector<Tensor> binding_grads(const Graph& g, const std::vector<ParamBinding>& bindings) {
    std::vector<Tensor> grads;
    grads.reserve(bindings.size());
    for (const ParamBinding& b : bindings) {
        Tensor gt(b.tensor->shape);
        try {
            gt.values = g.grad(b.node).values;
        } catch (const ContractError&) {
        }
        grads.push_back(std::move(gt));
    }
    return grads;
}

} // namespace

TrainResult train_gan(const PairDataset& data, const TrainConfig& cfg, const Checkpoint* resume,
                      const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.train_count == 0) throw ContractError("train: empty training split");

    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    if (resume) {
        ck = *resume;
    } else {
        ck.model = GanModel::create(cfg.seed);
        ck.rng_state = SplitMix64(cfg.seed ^ 0x5A17A17A5A17A17AULL).state();
    }
    GanModel& m = ck.model;
    SplitMix64 rng(ck.rng_state);

    const AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps};
    std::vector<Tensor*> params_d = trainable_params(m.d_spec, m.d);

    std::vector<std::size_t> order(data.train_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const bool use_gan = !cfg.despeckle_only;
    const Real lambda = static_cast<Real>(cfg.lambda_a);

    for (int epoch = static_cast<int>(ck.epoch); epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates from the identity so the epoch order is a pure
        // function of the checkpointed stream state
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(order[i - 1], order[j]);
        }

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const Batch batch = gather_batch(data, order, start, stop);
            TraceRow row;
            row.step = ck.step + 1;

            if (use_gan) {
                for (int ds = 0; ds < cfg.d_steps_per_g_step; ++ds) {
                    // detached fakes: generator parameters enter as constants
                    Tensor fake;
                    {
                        Graph gf;
                        const Graph::NodeId in = gf.leaf(batch.y);
                        const Graph::NodeId despeckled =
                            network_forward(gf, m.gd_spec, m.gd, in, BnMode::TrainFrozen);
                        const Graph::NodeId colorized = network_forward(
                            gf, m.gc_spec, m.gc, despeckled, BnMode::TrainFrozen);
                        fake = gf.value(colorized);
                    }
                    Graph gd_graph;
                    std::vector<ParamBinding> bind_d;
                    const Graph::NodeId real_in = gd_graph.leaf(batch.x);
                    const Graph::NodeId fake_in = gd_graph.leaf(fake);
                    const Graph::NodeId d_real =
                        network_forward(gd_graph, m.d_spec, m.d, real_in, BnMode::Train, &bind_d);
                    std::vector<ParamBinding> bind_d_fake;
                    const Graph::NodeId d_fake = network_forward(gd_graph, m.d_spec, m.d, fake_in,
                                                                 BnMode::Train, &bind_d_fake);
                    const Graph::NodeId loss_d = discriminator_loss(gd_graph, d_real, d_fake);
                    const double loss_d_value = gd_graph.value(loss_d).scalar();
                    if (!std::isfinite(loss_d_value)) {
                        const auto label = gd_graph.first_nonfinite();
                        throw NumericError("train: non-finite discriminator loss at tensor " +
                                           label.value_or("<loss>"));
                    }
                    gd_graph.backward(loss_d);
                    // the two D applications share parameters: merge gradients
                    std::vector<Tensor> grads = binding_grads(gd_graph, bind_d);
                    const std::vector<Tensor> grads_fake = binding_grads(gd_graph, bind_d_fake);
                    for (std::size_t i = 0; i < grads.size(); ++i)
                        for (std::size_t j = 0; j < grads[i].size(); ++j)
                            grads[i].values[j] += grads_fake[i].values[j];
                    std::vector<const Tensor*> gptrs;
                    for (const Tensor& t : grads) gptrs.push_back(&t);
                    std::vector<Tensor*> pptrs;
                    for (const ParamBinding& b : bind_d) pptrs.push_back(b.tensor);
                    adam_step(pptrs, gptrs, ck.adam_d, adam_cfg);
                    check_finite_params(params_d, "discriminator");
                    row.d_loss = loss_d_value;
                }
            }

            // generator step: end-to-end loss through both sub-networks
            {
                Graph g;
                std::vector<ParamBinding> bind_g;
                const Graph::NodeId in = g.leaf(batch.y);
                const Graph::NodeId gray_t = g.leaf(batch.x_gray);
                const Graph::NodeId despeckled =
                    network_forward(g, m.gd_spec, m.gd, in, BnMode::Train, &bind_g);
                const Graph::NodeId l_d = l1_loss(g, despeckled, gray_t);
                Graph::NodeId total = l_d;
                Graph::NodeId l_c_l1 = Graph::kNone;
                Graph::NodeId l_a = Graph::kNone;
                if (use_gan) {
                    const Graph::NodeId rgb_t = g.leaf(batch.x);
                    const Graph::NodeId colorized =
                        network_forward(g, m.gc_spec, m.gc, despeckled, BnMode::Train, &bind_g);
                    l_c_l1 = l1_loss(g, colorized, rgb_t);
                    total = g.add(total, l_c_l1);
                    if (lambda != 0) {
                        // discriminator as a frozen critic: constants, no stat updates
                        const Graph::NodeId d_out =
                            network_forward(g, m.d_spec, m.d, colorized, BnMode::TrainFrozen);
                        l_a = adversarial_loss_g(g, d_out);
                        total = g.add(total, g.scale_shift(l_a, lambda, Real(0)));
                    }
                }
                const double total_value = g.value(total).scalar();
                if (!std::isfinite(total_value)) {
                    const auto label = g.first_nonfinite();
                    throw NumericError("train: non-finite generator loss at tensor " +
                                       label.value_or("<loss>"));
                }
                g.backward(total);
                const std::vector<Tensor> grads = binding_grads(g, bind_g);
                std::vector<const Tensor*> gptrs;
                for (const Tensor& t : grads) gptrs.push_back(&t);
                std::vector<Tensor*> pptrs;
                for (const ParamBinding& b : bind_g) pptrs.push_back(b.tensor);
                adam_step(pptrs, gptrs, ck.adam_g, adam_cfg);
                check_finite_params(pptrs, "generator");

                row.l_d = g.value(l_d).scalar();
                row.l_c_l1 = l_c_l1 != Graph::kNone ? g.value(l_c_l1).scalar() : 0.0;
                row.l_c_adv = l_a != Graph::kNone ? g.value(l_a).scalar() : 0.0;
                row.l_total = total_value;
            }

            ck.step += 1;
            result.trace.push_back(row);
        }

        ck.epoch = epoch + 1;
        ck.rng_state = rng.state();

        if (!cfg.out_dir.empty() && (epoch + 1) % cfg.checkpoint_every == 0) {
            const std::filesystem::path dir(cfg.out_dir);
            std::filesystem::create_directories(dir);
            save_checkpoint(dir / "checkpoint_latest.bin", ck);
            std::ofstream trace_out(dir / "trace.csv");
            trace_out << trace_csv(result.trace);
        }
        if (on_epoch && !on_epoch(epoch, ck, result.trace)) break;
    }
    return result;
}

} // namespace sargan
