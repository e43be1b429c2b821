#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sargan/graph.hpp"
#include "sargan/tensor.hpp"

namespace sargan {

enum class Activation { None, Relu, LeakyRelu };

struct LayerSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    bool has_bias = true;
    bool has_bn = false;
    Activation activation = Activation::None;
    Real leaky_slope = Real(0.2);
    int skip_from = -1; // add the post-activation output of that layer index
};

enum class NetworkHead {
    None,
    DivisionResidualTanh, // divide the network input by the produced speckle estimate, then tanh
    TanhRescale01,        // tanh rescaled to [0,1] via (t+1)/2
    PoolLinearSigmoid,    // global average pool, affine map to one logit, sigmoid
};

struct NetworkSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    NetworkHead head = NetworkHead::None;
    Real division_eps = Real(1e-3);
    int head_linear_out = 1;
    int min_spatial = 1;

    int input_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
    int skip_count() const;
    void validate() const; // throws ContractError on inconsistent topology
};

struct LayerParams {
    Tensor kernel;       // {Cout,Cin,k,k}
    Tensor bias;         // {Cout} or empty
    Tensor gamma, beta;  // {C} or empty
    BnStats bn;          // running buffers, allocated iff has_bn
};

struct NetworkState {
    std::vector<LayerParams> layers;
    Tensor head_weight, head_bias; // PoolLinearSigmoid only

    std::size_t parameter_count(const NetworkSpec& spec) const; // trainable scalars
};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
    bool trainable;
};

// Stable-ordered view of every tensor in the state (running stats included),
// names prefixed with the spec name, e.g. "gd.conv3.kernel".
std::vector<NamedTensor> named_tensors(const NetworkSpec& spec, NetworkState& state);

// Fresh state for a spec: Kaiming-uniform fan-in kernels, zero biases,
// unit/zero batch-norm scale/shift, zero/unit running stats.
NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed);

// Despeckler G_D: conv 3x3 stride-1 layers at `feature_maps` width with
// batch norm + ReLU (first layer without BN), a final 1-map conv producing
// the speckle estimate, then the division residual and tanh.
std::pair<NetworkSpec, NetworkState> build_despeckling_net(std::uint64_t seed = 0,
                                                           int feature_maps = 64,
                                                           int conv_layers = 8);

// Colorizer G_C: stride-1 conv stack with BN + ReLU on all but the final
// projection to 3 channels, additive skip connections pairing early and late
// layers (1->7, 2->6, 3->5 at the default depth), tanh rescaled to [0,1].
std::pair<NetworkSpec, NetworkState> build_colorization_net(std::uint64_t seed = 0,
                                                            int feature_maps = 64,
                                                            int conv_layers = 8);

// Discriminator D: stride-2 4x4 convs doubling channels from `base_channels`,
// BN from the second layer on, leaky ReLU 0.2, global average pooling and an
// affine map to a sigmoid probability.
std::pair<NetworkSpec, NetworkState> build_discriminator(std::uint64_t seed = 0,
                                                         int base_channels = 64,
                                                         int conv_layers = 4);

// Appends the network to the tape and returns the output node. When
// `bindings` is non-null the parameter leaves require gradients and one
// ParamBinding per trainable tensor is appended (training / grad checks);
// otherwise parameters enter as constants (inference, detached forwards).
Graph::NodeId network_forward(Graph& g, const NetworkSpec& spec, NetworkState& state,
                              Graph::NodeId input, BnMode bn_mode,
                              std::vector<ParamBinding>* bindings = nullptr);

// The generator composition: despeckle then colorize, batch norm in eval
// mode. Input {1,H,W}, returns ({1,H,W}, {3,H,W}).
std::pair<Tensor, Tensor> generator_forward(const NetworkSpec& gd_spec, NetworkState& gd,
                                            const NetworkSpec& gc_spec, NetworkState& gc,
                                            const Tensor& y);

// --- losses ---------------------------------------------------------------

inline constexpr Real kLogClamp = Real(1e-7);

struct LossWeights {
    Real lambda_a = Real(0.1);
};

// mean |est - target| on the tape
Graph::NodeId l1_loss(Graph& g, Graph::NodeId estimate, Graph::NodeId target);

// -mean log D(xhat), D outputs clamped to [1e-7, 1-1e-7]
Graph::NodeId adversarial_loss_g(Graph& g, Graph::NodeId d_outputs);

// -mean log D(real) - mean log(1 - D(fake)), same clamp
Graph::NodeId discriminator_loss(Graph& g, Graph::NodeId d_real, Graph::NodeId d_fake);

// plain-value forms
double l1_loss_value(const Tensor& estimate, const Tensor& target);
double adversarial_loss_g_value(const std::vector<double>& d_outputs);
double discriminator_loss_value(const std::vector<double>& d_real,
                                const std::vector<double>& d_fake);

// The three networks as one unit plus the spec-level loss evaluations
// (batch norm in eval mode so the calls are pure).
struct GanModel {
    NetworkSpec gd_spec, gc_spec, d_spec;
    NetworkState gd, gc, d;

    static GanModel create(std::uint64_t seed);
    static GanModel create_sized(std::uint64_t seed, int feature_maps, int g_layers,
                                 int d_base_channels, int d_layers);
};

double loss_despeckle(GanModel& m, const Tensor& y, const Tensor& x_rgb);
double loss_colorize(GanModel& m, const Tensor& y, const Tensor& x_rgb, const LossWeights& w);
double loss_total(GanModel& m, const Tensor& y, const Tensor& x_rgb, const LossWeights& w);

// --- batch helpers ---------------------------------------------------------

Tensor stack_batch(const std::vector<const Tensor*>& images); // {C,H,W}xN -> {N,C,H,W}
Tensor slice_batch(const Tensor& batch, int index);           // {N,C,H,W} -> {C,H,W}

} // namespace sargan
