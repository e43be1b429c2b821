#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sargan/tensor.hpp"

namespace sargan {

// Running batch-norm statistics. Owned by the network state, referenced by
// graph nodes; updated in place only when a node runs with BnMode::Train.
struct BnStats {
    Tensor running_mean; // {C}
    Tensor running_var;  // {C}
};

enum class BnMode {
    Eval,        // normalize by running statistics
    Train,       // batch statistics, update running buffers (momentum 0.9)
    TrainFrozen, // batch statistics, leave running buffers untouched
};

// Reverse-mode tape. Nodes are appended in construction order, which is a
// topological order by construction; backward() walks it in exact reverse.
// A Graph and its tensors stay on one thread; distinct graphs may run
// concurrently.
class Graph {
public:
    using NodeId = int;
    static constexpr NodeId kNone = -1;

    // Copies `t` into the tape. requires_grad marks trainable leaves.
    NodeId leaf(const Tensor& t, bool requires_grad = false, std::string label = {});

    // input {N,Cin,H,W}, kernel {Cout,Cin,kh,kw}, optional bias {Cout}.
    // Cross-correlation with zero padding; output extents must divide evenly
    // or a DimensionError is thrown.
    NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, int zero_pad);

    // Per-channel normalization, gamma/beta {C}. Variance epsilon 1e-5.
    NodeId batch_norm(NodeId input, NodeId gamma, NodeId beta, BnStats* stats, BnMode mode);

    NodeId relu(NodeId x);
    NodeId leaky_relu(NodeId x, Real slope);
    NodeId tanh(NodeId x);
    NodeId sigmoid(NodeId x);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);

    // numerator / (denominator + eps), elementwise. The division residual
    // layer; eps guards near-zero speckle estimates.
    NodeId div_eps(NodeId numerator, NodeId denominator, Real eps);

    // a * x + b with scalar constants (leaky affine plumbing: tanh rescale,
    // 1 - x, loss weighting).
    NodeId scale_shift(NodeId x, Real a, Real b);

    NodeId clamp(NodeId x, Real lo, Real hi);
    NodeId log(NodeId x); // DomainError on non-positive input
    NodeId abs(NodeId x);

    NodeId mean(NodeId x); // scalar {1}
    NodeId sum(NodeId x);  // scalar {1}

    // {N,C,H,W} -> {N,C} spatial average.
    NodeId global_avg_pool(NodeId x);

    // x {N,F}, weight {O,F}, bias {O} -> {N,O}.
    NodeId linear(NodeId x, NodeId weight, NodeId bias);

    // Populates grads of every reachable node with requires_grad set.
    // `loss` must be scalar.
    void backward(NodeId loss);

    const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
    Tensor& value(NodeId id) { return nodes_[check(id)].value; }
    const Tensor& grad(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_[check(id)].requires_grad; }
    const std::string& label(NodeId id) const { return nodes_[check(id)].label; }
    void set_label(NodeId id, std::string label) { nodes_[check(id)].label = std::move(label); }
    std::size_t node_count() const { return nodes_.size(); }

    // Label of the first node whose value (or grad, if present) holds a
    // NaN/Inf; nullopt when everything is finite.
    std::optional<std::string> first_nonfinite() const;

private:
    enum class Op {
        Leaf, Conv2d, BatchNorm, Relu, LeakyRelu, Tanh, Sigmoid,
        Add, Sub, Mul, DivEps, ScaleShift, Clamp, Log, Abs,
        Mean, Sum, Gap, Linear,
    };

    struct Node {
        Op op = Op::Leaf;
        std::array<NodeId, 3> in{kNone, kNone, kNone};
        Tensor value;
        Tensor grad; // allocated on first touch during backward
        bool requires_grad = false;
        // op scalars: stride/pad for conv, slope for leaky relu, (a, b) for
        // scale_shift and clamp bounds, eps for div_eps
        int stride = 1;
        int pad = 0;
        Real a = 0, b = 0, eps = 0;
        BnStats* bn_stats = nullptr;
        BnMode bn_mode = BnMode::Eval;
        Tensor aux0, aux1; // batch norm: normalized input, per-channel 1/std
        std::string label;
    };

    NodeId push(Node n);
    int check(NodeId id) const;
    Tensor& grad_buffer(NodeId id);
    bool any_requires(std::initializer_list<NodeId> ids) const;
    void backward_node(int i);

    std::vector<Node> nodes_;
};

// One entry per checked parameter block.
struct GradCheckBlock {
    std::string name;
    double max_rel_err = 0;
    bool pass = true;
};

struct GradCheckReport {
    double h = 0;
    double tol = 0;
    std::vector<GradCheckBlock> blocks;
    bool pass = true;
    double worst() const;
};

// Builds a scalar loss from leaves created for `params` (same order). Must be
// deterministic and free of external side effects so it can be re-evaluated
// under parameter perturbation.
using GraphBuilder =
    std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

// Name + storage + tape position of one parameter tensor inside a graph.
struct ParamBinding {
    std::string name;
    Tensor* tensor = nullptr;
    Graph::NodeId node = Graph::kNone;
};

// Builder over externally owned parameters (network states): fills `bindings`
// with every trainable tensor it placed on the tape and returns the loss.
// Re-invocations must read current tensor contents and leave no side effects
// behind (batch norm must run Eval or TrainFrozen).
using StatefulBuilder = std::function<Graph::NodeId(Graph&, std::vector<ParamBinding>&)>;

GradCheckReport grad_check_stateful(const StatefulBuilder& f, double h, double tol,
                                    int max_coords_per_block = 0, std::uint64_t coord_seed = 7);

// Runs builder once with backward to collect analytic gradients.
std::vector<Tensor> collect_gradients(const GraphBuilder& f, const std::vector<Tensor>& params);

// Central finite differences against supplied analytic gradients. Relative
// error per coordinate is |a - n| / max(|a|, |n|, 1e-8); a block passes when
// its max is <= tol. max_coords_per_block = 0 checks every coordinate,
// otherwise a fixed-seed subset of that size.
GradCheckReport fd_compare(const GraphBuilder& f, const std::vector<Tensor>& params,
                           const std::vector<std::string>& names,
                           const std::vector<Tensor>& analytic, double h, double tol,
                           int max_coords_per_block = 0, std::uint64_t coord_seed = 7);

// backward + fd_compare in one call. 64-bit builds only.
GradCheckReport grad_check(const GraphBuilder& f, const std::vector<Tensor>& params,
                           const std::vector<std::string>& names, double h, double tol,
                           int max_coords_per_block = 0, std::uint64_t coord_seed = 7);

} // namespace sargan
