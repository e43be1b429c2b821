#include "sargan/graph.hpp"

#include <algorithm>
#include <cmath>

#include "sargan/parallel.hpp"
#include "sargan/rng.hpp"

namespace sargan {

namespace {

constexpr Real kBnEps = Real(1e-5);
constexpr Real kBnMomentum = Real(0.9);

// Valid output range [o0, o1) such that 0 <= o*stride + off < extent_in.
inline void valid_out_range(int extent_in, int extent_out, int off, int stride, int& o0, int& o1) {
    int lo = 0;
    if (off < 0) lo = (-off + stride - 1) / stride;
    int hi = (extent_in - 1 - off) / stride + 1; // off <= extent_in-1 guaranteed by caller checks
    if (extent_in - 1 - off < 0) hi = 0;
    o0 = std::min(lo, extent_out);
    o1 = std::max(o0, std::min(hi, extent_out));
}

// Fixed-order 4-lane dot product; bit-identical regardless of caller context.
inline Real dot_n(const Real* a, const Real* b, int n) {
    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    Real s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Stride-1 row accumulation: out[ow] += sum_kw w[kw] * in[ow + kw - pad],
// taps outside [0, W) dropped. Interior positions take the fused fast loop.
inline void conv_row_stride1(Real* out, const Real* in, const Real* w, int kw_n, int pad,
                             int in_w, int out_w) {
    const int lo = std::min(out_w, std::max(0, pad));
    const int hi = std::max(lo, std::min(out_w, in_w - kw_n + pad + 1));
    for (int ow = 0; ow < lo; ++ow) {
        Real acc = 0;
        for (int k = 0; k < kw_n; ++k) {
            int iw = ow + k - pad;
            if (iw >= 0 && iw < in_w) acc += w[k] * in[iw];
        }
        out[ow] += acc;
    }
    const Real* q = in - pad;
    if (kw_n == 3) {
        const Real w0 = w[0], w1 = w[1], w2 = w[2];
        for (int ow = lo; ow < hi; ++ow)
            out[ow] += w0 * q[ow] + w1 * q[ow + 1] + w2 * q[ow + 2];
    } else {
        for (int ow = lo; ow < hi; ++ow) {
            Real acc = 0;
            for (int k = 0; k < kw_n; ++k) acc += w[k] * q[ow + k];
            out[ow] += acc;
        }
    }
    for (int ow = hi; ow < out_w; ++ow) {
        Real acc = 0;
        for (int k = 0; k < kw_n; ++k) {
            int iw = ow + k - pad;
            if (iw >= 0 && iw < in_w) acc += w[k] * in[iw];
        }
        out[ow] += acc;
    }
}

// Four-output-channel 3-tap row kernel: one pass over the input row feeds
// all four accumulator rows. The hot loop of every stride-1 3x3 layer.
inline void conv_row3_x4(Real* r0, Real* r1, Real* r2, Real* r3, const Real* in,
                         const Real* w0, const Real* w1, const Real* w2, const Real* w3,
                         int pad, int in_w, int out_w) {
    const int lo = std::min(out_w, std::max(0, pad));
    const int hi = std::max(lo, std::min(out_w, in_w - 3 + pad + 1));
    Real* rows[4] = {r0, r1, r2, r3};
    const Real* taps[4] = {w0, w1, w2, w3};
    for (int ow = 0; ow < lo; ++ow)
        for (int b = 0; b < 4; ++b) {
            Real acc = 0;
            for (int k = 0; k < 3; ++k) {
                int iw = ow + k - pad;
                if (iw >= 0 && iw < in_w) acc += taps[b][k] * in[iw];
            }
            rows[b][ow] += acc;
        }
    const Real* q = in - pad;
    const Real a0 = w0[0], a1 = w0[1], a2 = w0[2];
    const Real b0 = w1[0], b1 = w1[1], b2 = w1[2];
    const Real c0 = w2[0], c1 = w2[1], c2 = w2[2];
    const Real d0 = w3[0], d1 = w3[1], d2 = w3[2];
    for (int ow = lo; ow < hi; ++ow) {
        const Real t0 = q[ow], t1 = q[ow + 1], t2 = q[ow + 2];
        r0[ow] += a0 * t0 + a1 * t1 + a2 * t2;
        r1[ow] += b0 * t0 + b1 * t1 + b2 * t2;
        r2[ow] += c0 * t0 + c1 * t1 + c2 * t2;
        r3[ow] += d0 * t0 + d1 * t1 + d2 * t2;
    }
    for (int ow = hi; ow < out_w; ++ow)
        for (int b = 0; b < 4; ++b) {
            Real acc = 0;
            for (int k = 0; k < 3; ++k) {
                int iw = ow + k - pad;
                if (iw >= 0 && iw < in_w) acc += taps[b][k] * in[iw];
            }
            rows[b][ow] += acc;
        }
}

// Stride-1 forward pass, also reused for the backward input pass with a
// flipped transposed kernel. When `accumulate` is set the output is not
// cleared first (gradients add up across consumers).
void conv2d_forward_s1(const Real* xp, const Real* kp, const Real* bp, Real* op, int N, int Cin,
                       int H, int W, int Cout, int KH, int KW, int pad, int OH, int OW,
                       bool accumulate) {
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
    const int blocks = (Cout + 3) / 4;
    parallel_for(0, static_cast<std::int64_t>(N) * blocks, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t idx = i0; idx < i1; ++idx) {
            const int nn = static_cast<int>(idx / blocks);
            const int co0 = static_cast<int>(idx % blocks) * 4;
            const int co1 = std::min(Cout, co0 + 4);
            for (int co = co0; co < co1; ++co) {
                Real* out_pl = op + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                if (!accumulate) {
                    const Real fill = bp ? bp[co] : Real(0);
                    std::fill(out_pl, out_pl + out_plane, fill);
                } else if (bp) {
                    for (std::size_t j = 0; j < out_plane; ++j) out_pl[j] += bp[co];
                }
            }
            const bool full4 = (co1 - co0 == 4) && KW == 3;
            for (int ci = 0; ci < Cin; ++ci) {
                const Real* in_pl = xp + (static_cast<std::size_t>(nn) * Cin + ci) * in_plane;
                for (int kh = 0; kh < KH; ++kh) {
                    int oh0, oh1;
                    valid_out_range(H, OH, kh - pad, 1, oh0, oh1);
                    if (full4) {
                        const Real* w[4];
                        Real* pl[4];
                        for (int b = 0; b < 4; ++b) {
                            w[b] = kp + ((static_cast<std::size_t>(co0 + b) * Cin + ci) * KH + kh) * KW;
                            pl[b] = op + (static_cast<std::size_t>(nn) * Cout + co0 + b) * out_plane;
                        }
                        for (int oh = oh0; oh < oh1; ++oh) {
                            const Real* in_row = in_pl + static_cast<std::size_t>(oh + kh - pad) * W;
                            const std::size_t ro = static_cast<std::size_t>(oh) * OW;
                            conv_row3_x4(pl[0] + ro, pl[1] + ro, pl[2] + ro, pl[3] + ro, in_row,
                                         w[0], w[1], w[2], w[3], pad, W, OW);
                        }
                    } else {
                        for (int co = co0; co < co1; ++co) {
                            const Real* ks =
                                kp + ((static_cast<std::size_t>(co) * Cin + ci) * KH + kh) * KW;
                            Real* out_pl =
                                op + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                            for (int oh = oh0; oh < oh1; ++oh) {
                                const Real* in_row =
                                    in_pl + static_cast<std::size_t>(oh + kh - pad) * W;
                                conv_row_stride1(out_pl + static_cast<std::size_t>(oh) * OW,
                                                 in_row, ks, KW, pad, W, OW);
                            }
                        }
                    }
                }
            }
        }
    });
}

// Stride-1 kernel-gradient pass: for each (co, ci, kh) one row sweep feeds
// all KW tap accumulators at once, four lanes each.
void conv2d_kernel_grad_s1(const Real* xp, const Real* go, Real* dk, int N, int Cin, int H, int W,
                           int Cout, int KH, int KW, int pad, int OH, int OW) {
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
    parallel_for(0, Cout, [&](std::int64_t c0, std::int64_t c1) {
        std::vector<Real> acc(static_cast<std::size_t>(KW));
        for (int co = static_cast<int>(c0); co < static_cast<int>(c1); ++co) {
            for (int ci = 0; ci < Cin; ++ci) {
                Real* dks = dk + ((static_cast<std::size_t>(co) * Cin + ci) * KH) * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    std::fill(acc.begin(), acc.end(), Real(0));
                    int oh0, oh1;
                    valid_out_range(H, OH, kh - pad, 1, oh0, oh1);
                    for (int nn = 0; nn < N; ++nn) {
                        const Real* go_pl =
                            go + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                        const Real* in_pl =
                            xp + (static_cast<std::size_t>(nn) * Cin + ci) * in_plane;
                        for (int oh = oh0; oh < oh1; ++oh) {
                            const Real* go_row = go_pl + static_cast<std::size_t>(oh) * OW;
                            const Real* in_row =
                                in_pl + static_cast<std::size_t>(oh + kh - pad) * W;
                            if (KW == 3) {
                                // all three taps in one sweep of the row
                                const int lo = std::min(OW, std::max(0, pad));
                                const int hi = std::max(lo, std::min(OW, W - 3 + pad + 1));
                                const Real* q = in_row - pad;
                                Real a00 = 0, a01 = 0, a02 = 0, a03 = 0;
                                Real a10 = 0, a11 = 0, a12 = 0, a13 = 0;
                                Real a20 = 0, a21 = 0, a22 = 0, a23 = 0;
                                int ow = lo;
                                for (; ow + 4 <= hi; ow += 4) {
                                    const Real t0 = go_row[ow], t1 = go_row[ow + 1];
                                    const Real t2 = go_row[ow + 2], t3 = go_row[ow + 3];
                                    a00 += t0 * q[ow];
                                    a01 += t1 * q[ow + 1];
                                    a02 += t2 * q[ow + 2];
                                    a03 += t3 * q[ow + 3];
                                    a10 += t0 * q[ow + 1];
                                    a11 += t1 * q[ow + 2];
                                    a12 += t2 * q[ow + 3];
                                    a13 += t3 * q[ow + 4];
                                    a20 += t0 * q[ow + 2];
                                    a21 += t1 * q[ow + 3];
                                    a22 += t2 * q[ow + 4];
                                    a23 += t3 * q[ow + 5];
                                }
                                for (; ow < hi; ++ow) {
                                    const Real t = go_row[ow];
                                    a00 += t * q[ow];
                                    a10 += t * q[ow + 1];
                                    a20 += t * q[ow + 2];
                                }
                                acc[0] += (a00 + a01) + (a02 + a03);
                                acc[1] += (a10 + a11) + (a12 + a13);
                                acc[2] += (a20 + a21) + (a22 + a23);
                                // boundary columns where some tap is clipped
                                for (int kw = 0; kw < 3; ++kw) {
                                    int ow0, ow1;
                                    valid_out_range(W, OW, kw - pad, 1, ow0, ow1);
                                    for (int b = ow0; b < std::min(ow1, lo); ++b)
                                        acc[static_cast<std::size_t>(kw)] +=
                                            go_row[b] * q[b + kw];
                                    for (int b = std::max(ow0, hi); b < ow1; ++b)
                                        acc[static_cast<std::size_t>(kw)] +=
                                            go_row[b] * q[b + kw];
                                }
                            } else {
                                for (int kw = 0; kw < KW; ++kw) {
                                    int ow0, ow1;
                                    valid_out_range(W, OW, kw - pad, 1, ow0, ow1);
                                    if (ow1 <= ow0) continue;
                                    const Real* a = go_row + ow0;
                                    const Real* b = in_row + ow0 + kw - pad;
                                    const int len = ow1 - ow0;
                                    Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                                    int i = 0;
                                    for (; i + 4 <= len; i += 4) {
                                        s0 += a[i] * b[i];
                                        s1 += a[i + 1] * b[i + 1];
                                        s2 += a[i + 2] * b[i + 2];
                                        s3 += a[i + 3] * b[i + 3];
                                    }
                                    Real s = (s0 + s1) + (s2 + s3);
                                    for (; i < len; ++i) s += a[i] * b[i];
                                    acc[static_cast<std::size_t>(kw)] += s;
                                }
                            }
                        }
                    }
                    for (int kw = 0; kw < KW; ++kw)
                        dks[kh * KW + kw] += acc[static_cast<std::size_t>(kw)];
                }
            }
        }
    });
}

} // namespace

int Graph::check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ContractError("graph: invalid node id " + std::to_string(id));
    return id;
}

Graph::NodeId Graph::push(Node n) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    if (n.label.empty()) {
        static const char* names[] = {"leaf",  "conv2d", "batch_norm", "relu", "leaky_relu",
                                      "tanh",  "sigmoid", "add",       "sub",  "mul",
                                      "div",   "scale_shift", "clamp", "log",  "abs",
                                      "mean",  "sum",    "gap",        "linear"};
        n.label = std::string(names[static_cast<int>(n.op)]) + "#" + std::to_string(id);
    }
    nodes_.push_back(std::move(n));
    return id;
}

bool Graph::any_requires(std::initializer_list<NodeId> ids) const {
    for (NodeId id : ids)
        if (id != kNone && nodes_[check(id)].requires_grad) return true;
    return false;
}

Tensor& Graph::grad_buffer(NodeId id) {
    Node& n = nodes_[check(id)];
    if (n.grad.values.empty()) {
        n.grad.shape = n.value.shape;
        n.grad.values.assign(n.value.size(), Real(0));
    }
    return n.grad;
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = nodes_[check(id)];
    if (n.grad.values.empty())
        throw ContractError("graph: no gradient on node " + n.label);
    return n.grad;
}

Graph::NodeId Graph::leaf(const Tensor& t, bool requires_grad, std::string label) {
    Node n;
    n.op = Op::Leaf;
    n.value = t;
    n.value.grad.clear();
    n.requires_grad = requires_grad;
    n.label = std::move(label);
    return push(std::move(n));
}

Graph::NodeId Graph::conv2d(NodeId input, NodeId kernel, NodeId bias, int stride, int zero_pad) {
    const Tensor& x = value(input);
    const Tensor& k = value(kernel);
    if (x.rank() != 4) throw DimensionError("conv2d: input must be {N,Cin,H,W}, got " + x.shape_str());
    if (k.rank() != 4) throw DimensionError("conv2d: kernel must be {Cout,Cin,kh,kw}, got " + k.shape_str());
    if (x.shape[1] != k.shape[1])
        throw DimensionError("conv2d: input channels " + std::to_string(x.shape[1]) +
                             " vs kernel channels " + std::to_string(k.shape[1]));
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
    if (zero_pad < 0) throw ContractError("conv2d: zero_pad must be >= 0");
    const int N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
    const int Cout = k.shape[0], KH = k.shape[2], KW = k.shape[3];
    if (bias != kNone) {
        const Tensor& b = value(bias);
        if (b.rank() != 1 || b.shape[0] != Cout)
            throw DimensionError("conv2d: bias must be {Cout}, got " + b.shape_str());
    }
    const int eh = H + 2 * zero_pad - KH;
    const int ew = W + 2 * zero_pad - KW;
    if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0)
        throw DimensionError("conv2d: non-integral output extent for input " + x.shape_str() +
                             ", kernel " + k.shape_str() + ", stride " + std::to_string(stride) +
                             ", pad " + std::to_string(zero_pad));
    const int OH = eh / stride + 1;
    const int OW = ew / stride + 1;

    Node n;
    n.op = Op::Conv2d;
    n.in = {input, kernel, bias};
    n.stride = stride;
    n.pad = zero_pad;
    n.requires_grad = any_requires({input, kernel, bias});
    n.value = Tensor({N, Cout, OH, OW});

    const Real* xp = x.values.data();
    const Real* kp = k.values.data();
    const Real* bp = bias != kNone ? value(bias).values.data() : nullptr;
    Real* op = n.value.values.data();
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;

    if (stride == 1) {
        conv2d_forward_s1(xp, kp, bp, op, N, Cin, H, W, Cout, KH, KW, zero_pad, OH, OW, false);
        return push(std::move(n));
    }
    parallel_for(0, static_cast<std::int64_t>(N) * Cout, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t idx = i0; idx < i1; ++idx) {
            const int nn = static_cast<int>(idx / Cout);
            const int co = static_cast<int>(idx % Cout);
            Real* out_pl = op + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
            const Real fill = bp ? bp[co] : Real(0);
            std::fill(out_pl, out_pl + out_plane, fill);
            for (int ci = 0; ci < Cin; ++ci) {
                const Real* in_pl = xp + (static_cast<std::size_t>(nn) * Cin + ci) * in_plane;
                const Real* ks = kp + ((static_cast<std::size_t>(co) * Cin + ci) * KH) * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    int oh0, oh1;
                    valid_out_range(H, OH, kh - zero_pad, stride, oh0, oh1);
                    for (int oh = oh0; oh < oh1; ++oh) {
                        const int ih = oh * stride + kh - zero_pad;
                        const Real* in_row = in_pl + static_cast<std::size_t>(ih) * W;
                        Real* out_row = out_pl + static_cast<std::size_t>(oh) * OW;
                        for (int kw = 0; kw < KW; ++kw) {
                            const Real w = ks[kh * KW + kw];
                            int ow0, ow1;
                            valid_out_range(W, OW, kw - zero_pad, stride, ow0, ow1);
                            for (int ow = ow0; ow < ow1; ++ow)
                                out_row[ow] += w * in_row[ow * stride + kw - zero_pad];
                        }
                    }
                }
            }
        }
    });
    return push(std::move(n));
}

Graph::NodeId Graph::batch_norm(NodeId input, NodeId gamma, NodeId beta, BnStats* stats,
                                BnMode mode) {
    const Tensor& x = value(input);
    if (x.rank() != 4) throw DimensionError("batch_norm: input must be {N,C,H,W}, got " + x.shape_str());
    const int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    const Tensor& g = value(gamma);
    const Tensor& b = value(beta);
    if (g.rank() != 1 || g.shape[0] != C || b.rank() != 1 || b.shape[0] != C)
        throw DimensionError("batch_norm: gamma/beta must be {C}");
    if (!stats || stats->running_mean.size() != static_cast<std::size_t>(C) ||
        stats->running_var.size() != static_cast<std::size_t>(C))
        throw DimensionError("batch_norm: running stats must be {C}");
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
    if (m < 1) throw DimensionError("batch_norm: empty channel slab");
    if (mode != BnMode::Eval && m < 2)
        throw DimensionError("batch_norm: train mode needs batch*H*W > 1 per channel");

    Node n;
    n.op = Op::BatchNorm;
    n.in = {input, gamma, beta};
    n.bn_stats = stats;
    n.bn_mode = mode;
    n.requires_grad = any_requires({input, gamma, beta});
    n.value = Tensor(x.shape);
    n.aux0 = Tensor(x.shape); // normalized input
    n.aux1 = Tensor({C});     // 1/std per channel

    const Real* xp = x.values.data();
    Real* yp = n.value.values.data();
    Real* xh = n.aux0.values.data();
    Real* istd_c = n.aux1.values.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (int c = 0; c < C; ++c) {
        Real mu, var;
        if (mode == BnMode::Eval) {
            mu = stats->running_mean.values[c];
            var = stats->running_var.values[c];
        } else {
            Real s = 0;
            for (int nn = 0; nn < N; ++nn) {
                const Real* row = xp + (static_cast<std::size_t>(nn) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += row[i];
            }
            mu = s / static_cast<Real>(m);
            Real sq = 0;
            for (int nn = 0; nn < N; ++nn) {
                const Real* row = xp + (static_cast<std::size_t>(nn) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const Real d = row[i] - mu;
                    sq += d * d;
                }
            }
            var = sq / static_cast<Real>(m);
            if (mode == BnMode::Train) {
                // unbiased variance goes into the running buffer
                const Real unbiased = var * static_cast<Real>(m) / static_cast<Real>(m - 1);
                stats->running_mean.values[c] =
                    kBnMomentum * stats->running_mean.values[c] + (1 - kBnMomentum) * mu;
                stats->running_var.values[c] =
                    kBnMomentum * stats->running_var.values[c] + (1 - kBnMomentum) * unbiased;
            }
        }
        const Real istd = Real(1) / std::sqrt(var + kBnEps);
        istd_c[c] = istd;
        const Real gc = g.values[c], bc = b.values[c];
        for (int nn = 0; nn < N; ++nn) {
            const std::size_t base = (static_cast<std::size_t>(nn) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const Real v = (xp[base + i] - mu) * istd;
                xh[base + i] = v;
                yp[base + i] = gc * v + bc;
            }
        }
    }
    return push(std::move(n));
}

Graph::NodeId Graph::relu(NodeId x) {
    Node n;
    n.op = Op::Relu;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = v > 0 ? v : Real(0);
    return push(std::move(n));
}

Graph::NodeId Graph::leaky_relu(NodeId x, Real slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.in = {x, kNone, kNone};
    n.a = slope;
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = v > 0 ? v : slope * v;
    return push(std::move(n));
}

Graph::NodeId Graph::tanh(NodeId x) {
    Node n;
    n.op = Op::Tanh;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = std::tanh(v);
    return push(std::move(n));
}

Graph::NodeId Graph::sigmoid(NodeId x) {
    Node n;
    n.op = Op::Sigmoid;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = Real(1) / (Real(1) + std::exp(-v));
    return push(std::move(n));
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "add");
    Node n;
    n.op = Op::Add;
    n.in = {a, b, kNone};
    n.requires_grad = any_requires({a, b});
    n.value = value(a);
    const Real* bp = value(b).values.data();
    Real* vp = n.value.values.data();
    for (std::size_t i = 0; i < n.value.size(); ++i) vp[i] += bp[i];
    return push(std::move(n));
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "sub");
    Node n;
    n.op = Op::Sub;
    n.in = {a, b, kNone};
    n.requires_grad = any_requires({a, b});
    n.value = value(a);
    const Real* bp = value(b).values.data();
    Real* vp = n.value.values.data();
    for (std::size_t i = 0; i < n.value.size(); ++i) vp[i] -= bp[i];
    return push(std::move(n));
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    check_same_shape(value(a), value(b), "mul");
    Node n;
    n.op = Op::Mul;
    n.in = {a, b, kNone};
    n.requires_grad = any_requires({a, b});
    n.value = value(a);
    const Real* bp = value(b).values.data();
    Real* vp = n.value.values.data();
    for (std::size_t i = 0; i < n.value.size(); ++i) vp[i] *= bp[i];
    return push(std::move(n));
}

Graph::NodeId Graph::div_eps(NodeId numerator, NodeId denominator, Real eps) {
    check_same_shape(value(numerator), value(denominator), "div");
    if (eps < 0) throw ContractError("div: eps must be >= 0");
    Node n;
    n.op = Op::DivEps;
    n.in = {numerator, denominator, kNone};
    n.eps = eps;
    n.requires_grad = any_requires({numerator, denominator});
    n.value = value(numerator);
    const Real* dp = value(denominator).values.data();
    Real* vp = n.value.values.data();
    for (std::size_t i = 0; i < n.value.size(); ++i) vp[i] /= dp[i] + eps;
    return push(std::move(n));
}

Graph::NodeId Graph::scale_shift(NodeId x, Real a, Real b) {
    Node n;
    n.op = Op::ScaleShift;
    n.in = {x, kNone, kNone};
    n.a = a;
    n.b = b;
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = a * v + b;
    return push(std::move(n));
}

Graph::NodeId Graph::clamp(NodeId x, Real lo, Real hi) {
    if (lo > hi) throw ContractError("clamp: lo > hi");
    Node n;
    n.op = Op::Clamp;
    n.in = {x, kNone, kNone};
    n.a = lo;
    n.b = hi;
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = std::min(hi, std::max(lo, v));
    return push(std::move(n));
}

Graph::NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::Log;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) {
        if (v <= 0) throw DomainError("log: non-positive input");
        v = std::log(v);
    }
    return push(std::move(n));
}

Graph::NodeId Graph::abs(NodeId x) {
    Node n;
    n.op = Op::Abs;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = value(x);
    for (auto& v : n.value.values) v = std::abs(v);
    return push(std::move(n));
}

Graph::NodeId Graph::mean(NodeId x) {
    Node n;
    n.op = Op::Mean;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    const Tensor& t = value(x);
    Real s = 0;
    for (Real v : t.values) s += v;
    n.value = Tensor({1}, {s / static_cast<Real>(t.size())});
    return push(std::move(n));
}

Graph::NodeId Graph::sum(NodeId x) {
    Node n;
    n.op = Op::Sum;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    const Tensor& t = value(x);
    Real s = 0;
    for (Real v : t.values) s += v;
    n.value = Tensor({1}, {s});
    return push(std::move(n));
}

Graph::NodeId Graph::global_avg_pool(NodeId x) {
    const Tensor& t = value(x);
    if (t.rank() != 4) throw DimensionError("gap: input must be {N,C,H,W}, got " + t.shape_str());
    const int N = t.shape[0], C = t.shape[1];
    const std::size_t plane = static_cast<std::size_t>(t.shape[2]) * t.shape[3];
    Node n;
    n.op = Op::Gap;
    n.in = {x, kNone, kNone};
    n.requires_grad = any_requires({x});
    n.value = Tensor({N, C});
    for (int nn = 0; nn < N; ++nn)
        for (int c = 0; c < C; ++c) {
            const Real* row = t.values.data() + (static_cast<std::size_t>(nn) * C + c) * plane;
            Real s = 0;
            for (std::size_t i = 0; i < plane; ++i) s += row[i];
            n.value.at(nn, c) = s / static_cast<Real>(plane);
        }
    return push(std::move(n));
}

Graph::NodeId Graph::linear(NodeId x, NodeId weight, NodeId bias) {
    const Tensor& t = value(x);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (t.rank() != 2) throw DimensionError("linear: input must be {N,F}, got " + t.shape_str());
    if (w.rank() != 2 || w.shape[1] != t.shape[1])
        throw DimensionError("linear: weight must be {O,F} with F=" + std::to_string(t.shape[1]));
    if (b.rank() != 1 || b.shape[0] != w.shape[0])
        throw DimensionError("linear: bias must be {O}");
    const int N = t.shape[0], F = t.shape[1], O = w.shape[0];
    Node n;
    n.op = Op::Linear;
    n.in = {x, weight, bias};
    n.requires_grad = any_requires({x, weight, bias});
    n.value = Tensor({N, O});
    for (int nn = 0; nn < N; ++nn)
        for (int o = 0; o < O; ++o)
            n.value.at(nn, o) =
                b.values[o] + dot_n(t.values.data() + static_cast<std::size_t>(nn) * F,
                                    w.values.data() + static_cast<std::size_t>(o) * F, F);
    return push(std::move(n));
}

void Graph::backward(NodeId loss) {
    Node& ln = nodes_[check(loss)];
    if (ln.value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + ln.value.shape_str());
    if (!ln.requires_grad) return; // nothing trainable feeds the loss
    grad_buffer(loss).values[0] = Real(1);
    for (int i = loss; i >= 0; --i) {
        const Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.values.empty() || n.op == Op::Leaf) continue;
        backward_node(i);
    }
}

void Graph::backward_node(int i) {
    Node& n = nodes_[i];
    const Real* g = n.grad.values.data();
    const std::size_t sz = n.value.size();

    auto needs = [&](int slot) {
        return n.in[slot] != kNone && nodes_[n.in[slot]].requires_grad;
    };
    auto gbuf = [&](int slot) -> Real* { return grad_buffer(n.in[slot]).values.data(); };
    auto val = [&](int slot) -> const Tensor& { return nodes_[n.in[slot]].value; };

    switch (n.op) {
    case Op::Leaf:
        break;
    case Op::Conv2d: {
        const Tensor& x = val(0);
        const Tensor& k = val(1);
        const int N = x.shape[0], Cin = x.shape[1], H = x.shape[2], W = x.shape[3];
        const int Cout = k.shape[0], KH = k.shape[2], KW = k.shape[3];
        const int OH = n.value.shape[2], OW = n.value.shape[3];
        const int s = n.stride, p = n.pad;
        const std::size_t in_plane = static_cast<std::size_t>(H) * W;
        const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
        const Real* kp = k.values.data();
        const Real* xp = x.values.data();

        if (needs(0)) {
            Real* dx = gbuf(0);
            if (s == 1 && KH == KW && KH - 1 - p >= 0) {
                // the input gradient of a stride-1 correlation is itself a
                // stride-1 correlation with the flipped, transposed kernel
                std::vector<Real> kt(k.size());
                for (int co = 0; co < Cout; ++co)
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int kh = 0; kh < KH; ++kh)
                            for (int kw = 0; kw < KW; ++kw)
                                kt[((static_cast<std::size_t>(ci) * Cout + co) * KH +
                                    (KH - 1 - kh)) * KW + (KW - 1 - kw)] =
                                    kp[((static_cast<std::size_t>(co) * Cin + ci) * KH + kh) * KW +
                                       kw];
                conv2d_forward_s1(g, kt.data(), nullptr, dx, N, Cout, OH, OW, Cin, KH, KW,
                                  KH - 1 - p, H, W, true);
            } else {
                parallel_for(0, static_cast<std::int64_t>(N) * Cin,
                             [&](std::int64_t i0, std::int64_t i1) {
                    for (std::int64_t idx = i0; idx < i1; ++idx) {
                        const int nn = static_cast<int>(idx / Cin);
                        const int ci = static_cast<int>(idx % Cin);
                        Real* dx_pl = dx + (static_cast<std::size_t>(nn) * Cin + ci) * in_plane;
                        for (int co = 0; co < Cout; ++co) {
                            const Real* go_pl =
                                g + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                            const Real* ks =
                                kp + ((static_cast<std::size_t>(co) * Cin + ci) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                int oh0, oh1;
                                valid_out_range(H, OH, kh - p, s, oh0, oh1);
                                for (int oh = oh0; oh < oh1; ++oh) {
                                    const int ih = oh * s + kh - p;
                                    Real* dx_row = dx_pl + static_cast<std::size_t>(ih) * W;
                                    const Real* go_row =
                                        go_pl + static_cast<std::size_t>(oh) * OW;
                                    for (int kw = 0; kw < KW; ++kw) {
                                        const Real w = ks[kh * KW + kw];
                                        int ow0, ow1;
                                        valid_out_range(W, OW, kw - p, s, ow0, ow1);
                                        for (int ow = ow0; ow < ow1; ++ow)
                                            dx_row[ow * s + kw - p] += w * go_row[ow];
                                    }
                                }
                            }
                        }
                    }
                });
            }
        }
        if (needs(1)) {
            Real* dk = gbuf(1);
            if (s == 1) {
                conv2d_kernel_grad_s1(xp, g, dk, N, Cin, H, W, Cout, KH, KW, p, OH, OW);
            } else {
                parallel_for(0, Cout, [&](std::int64_t c0, std::int64_t c1) {
                    for (int co = static_cast<int>(c0); co < static_cast<int>(c1); ++co) {
                        for (int ci = 0; ci < Cin; ++ci) {
                            Real* dks = dk + ((static_cast<std::size_t>(co) * Cin + ci) * KH) * KW;
                            for (int kh = 0; kh < KH; ++kh) {
                                for (int kw = 0; kw < KW; ++kw) {
                                    Real acc = 0;
                                    int ow0, ow1;
                                    valid_out_range(W, OW, kw - p, s, ow0, ow1);
                                    if (ow1 <= ow0) continue;
                                    for (int nn = 0; nn < N; ++nn) {
                                        const Real* go_pl =
                                            g +
                                            (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                                        const Real* in_pl =
                                            xp +
                                            (static_cast<std::size_t>(nn) * Cin + ci) * in_plane;
                                        int oh0, oh1;
                                        valid_out_range(H, OH, kh - p, s, oh0, oh1);
                                        for (int oh = oh0; oh < oh1; ++oh) {
                                            const int ih = oh * s + kh - p;
                                            const Real* go_row =
                                                go_pl + static_cast<std::size_t>(oh) * OW;
                                            const Real* in_row =
                                                in_pl + static_cast<std::size_t>(ih) * W;
                                            for (int ow = ow0; ow < ow1; ++ow)
                                                acc += go_row[ow] * in_row[ow * s + kw - p];
                                        }
                                    }
                                    dks[kh * KW + kw] += acc;
                                }
                            }
                        }
                    }
                });
            }
        }
        if (needs(2)) {
            Real* db = gbuf(2);
            for (int nn = 0; nn < N; ++nn)
                for (int co = 0; co < Cout; ++co) {
                    const Real* go_pl = g + (static_cast<std::size_t>(nn) * Cout + co) * out_plane;
                    Real acc = 0;
                    for (std::size_t j = 0; j < out_plane; ++j) acc += go_pl[j];
                    db[co] += acc;
                }
        }
        break;
    }
    case Op::BatchNorm: {
        const Tensor& x = val(0);
        const Tensor& gam = val(1);
        const int N = x.shape[0], C = x.shape[1];
        const std::size_t plane = static_cast<std::size_t>(x.shape[2]) * x.shape[3];
        const std::int64_t m = static_cast<std::int64_t>(N) * plane;
        const Real* xh = n.aux0.values.data();
        const Real* istd_c = n.aux1.values.data();
        const bool train = n.bn_mode != BnMode::Eval;
        Real* dx = needs(0) ? gbuf(0) : nullptr;
        Real* dgam = needs(1) ? gbuf(1) : nullptr;
        Real* dbet = needs(2) ? gbuf(2) : nullptr;

        for (int c = 0; c < C; ++c) {
            const Real gc = gam.values[c];
            const Real istd = istd_c[c];
            Real sum_g = 0, sum_gx = 0;
            for (int nn = 0; nn < N; ++nn) {
                const std::size_t base = (static_cast<std::size_t>(nn) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += g[base + i];
                    sum_gx += g[base + i] * xh[base + i];
                }
            }
            if (dgam) dgam[c] += sum_gx;
            if (dbet) dbet[c] += sum_g;
            if (dx) {
                if (train) {
                    const Real k1 = gc * sum_g / static_cast<Real>(m);
                    const Real k2 = gc * sum_gx / static_cast<Real>(m);
                    for (int nn = 0; nn < N; ++nn) {
                        const std::size_t base = (static_cast<std::size_t>(nn) * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i)
                            dx[base + i] += istd * (gc * g[base + i] - k1 - xh[base + i] * k2);
                    }
                } else {
                    const Real k = gc * istd;
                    for (int nn = 0; nn < N; ++nn) {
                        const std::size_t base = (static_cast<std::size_t>(nn) * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) dx[base + i] += k * g[base + i];
                    }
                }
            }
        }
        break;
    }
    case Op::Relu: {
        if (!needs(0)) break;
        Real* dx = gbuf(0);
        const Real* x = val(0).values.data();
        for (std::size_t i = 0; i < sz; ++i)
            if (x[i] > 0) dx[i] += g[i];
        break;
    }
    case Op::LeakyRelu: {
        if (!needs(0)) break;
        Real* dx = gbuf(0);
        const Real* x = val(0).values.data();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += x[i] > 0 ? g[i] : n.a * g[i];
        break;
    }
    case Op::Tanh: {
        if (!needs(0)) break;
        Real* dx = gbuf(0);
        const Real* y = n.value.values.data();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += g[i] * (Real(1) - y[i] * y[i]);
        break;
    }
    case Op::Sigmoid: {
        if (!needs(0)) break;
        Real* dx = gbuf(0);
        const Real* y = n.value.values.data();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += g[i] * y[i] * (Real(1) - y[i]);
        break;
    }
    case Op::Add: {
        for (int slot = 0; slot < 2; ++slot) {
            if (!needs(slot)) continue;
            Real* d = gbuf(slot);
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[i];
        }
        break;
    }
    case Op::Sub: {
        if (needs(0)) {
            Real* d = gbuf(0);
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[i];
        }
        if (needs(1)) {
            Real* d = gbuf(1);
            for (std::size_t i = 0; i < sz; ++i) d[i] -= g[i];
        }
        break;
    }
    case Op::Mul: {
        if (needs(0)) {
            Real* d = gbuf(0);
            const Real* b = val(1).values.data();
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[i] * b[i];
        }
        if (needs(1)) {
            Real* d = gbuf(1);
            const Real* a = val(0).values.data();
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[i] * a[i];
        }
        break;
    }
    case Op::DivEps: {
        const Real* num = val(0).values.data();
        const Real* den = val(1).values.data();
        if (needs(0)) {
            Real* d = gbuf(0);
            for (std::size_t i = 0; i < sz; ++i) d[i] += g[i] / (den[i] + n.eps);
        }
        if (needs(1)) {
            Real* d = gbuf(1);
            for (std::size_t i = 0; i < sz; ++i) {
                const Real de = den[i] + n.eps;
                d[i] -= g[i] * num[i] / (de * de);
            }
        }
        break;
    }
    case Op::ScaleShift: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        for (std::size_t i = 0; i < sz; ++i) d[i] += n.a * g[i];
        break;
    }
    case Op::Clamp: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const Real* x = val(0).values.data();
        for (std::size_t i = 0; i < sz; ++i)
            if (x[i] > n.a && x[i] < n.b) d[i] += g[i];
        break;
    }
    case Op::Log: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const Real* x = val(0).values.data();
        for (std::size_t i = 0; i < sz; ++i) d[i] += g[i] / x[i];
        break;
    }
    case Op::Abs: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const Real* x = val(0).values.data();
        for (std::size_t i = 0; i < sz; ++i) {
            if (x[i] > 0)
                d[i] += g[i];
            else if (x[i] < 0)
                d[i] -= g[i]; // subgradient 0 at x == 0
        }
        break;
    }
    case Op::Mean: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const std::size_t in_sz = val(0).size();
        const Real gv = g[0] / static_cast<Real>(in_sz);
        for (std::size_t i = 0; i < in_sz; ++i) d[i] += gv;
        break;
    }
    case Op::Sum: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const std::size_t in_sz = val(0).size();
        for (std::size_t i = 0; i < in_sz; ++i) d[i] += g[0];
        break;
    }
    case Op::Gap: {
        if (!needs(0)) break;
        Real* d = gbuf(0);
        const Tensor& x = val(0);
        const int N = x.shape[0], C = x.shape[1];
        const std::size_t plane = static_cast<std::size_t>(x.shape[2]) * x.shape[3];
        for (int nn = 0; nn < N; ++nn)
            for (int c = 0; c < C; ++c) {
                const Real gv = g[static_cast<std::size_t>(nn) * C + c] / static_cast<Real>(plane);
                Real* row = d + (static_cast<std::size_t>(nn) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) row[i] += gv;
            }
        break;
    }
    case Op::Linear: {
        const Tensor& x = val(0);
        const Tensor& w = val(1);
        const int N = x.shape[0], F = x.shape[1], O = w.shape[0];
        if (needs(0)) {
            Real* d = gbuf(0);
            for (int nn = 0; nn < N; ++nn)
                for (int o = 0; o < O; ++o) {
                    const Real gv = g[static_cast<std::size_t>(nn) * O + o];
                    const Real* wr = w.values.data() + static_cast<std::size_t>(o) * F;
                    Real* dr = d + static_cast<std::size_t>(nn) * F;
                    for (int f = 0; f < F; ++f) dr[f] += gv * wr[f];
                }
        }
        if (needs(1)) {
            Real* d = gbuf(1);
            for (int nn = 0; nn < N; ++nn)
                for (int o = 0; o < O; ++o) {
                    const Real gv = g[static_cast<std::size_t>(nn) * O + o];
                    const Real* xr = x.values.data() + static_cast<std::size_t>(nn) * F;
                    Real* dr = d + static_cast<std::size_t>(o) * F;
                    for (int f = 0; f < F; ++f) dr[f] += gv * xr[f];
                }
        }
        if (needs(2)) {
            Real* d = gbuf(2);
            for (int nn = 0; nn < N; ++nn)
                for (int o = 0; o < O; ++o) d[o] += g[static_cast<std::size_t>(nn) * O + o];
        }
        break;
    }
    }
}

std::optional<std::string> Graph::first_nonfinite() const {
    for (const Node& n : nodes_) {
        for (Real v : n.value.values)
            if (!std::isfinite(v)) return n.label;
        for (Real v : n.grad.values)
            if (!std::isfinite(v)) return n.label + " (grad)";
    }
    return std::nullopt;
}

double GradCheckReport::worst() const {
    double w = 0;
    for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
    return w;
}

namespace {

double eval_loss(const GraphBuilder& f, const std::vector<Tensor>& params) {
    Graph g;
    std::vector<Graph::NodeId> ids;
    ids.reserve(params.size());
    for (const Tensor& p : params) ids.push_back(g.leaf(p, true));
    return static_cast<double>(g.value(f(g, ids)).scalar());
}

} // namespace

std::vector<Tensor> collect_gradients(const GraphBuilder& f, const std::vector<Tensor>& params) {
    Graph g;
    std::vector<Graph::NodeId> ids;
    ids.reserve(params.size());
    for (const Tensor& p : params) ids.push_back(g.leaf(p, true));
    const Graph::NodeId loss = f(g, ids);
    g.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor gt(params[i].shape);
        try {
            gt.values = g.grad(ids[i]).values;
        } catch (const ContractError&) {
            // parameter unreachable from the loss: gradient is zero
        }
        grads.push_back(std::move(gt));
    }
    return grads;
}

GradCheckReport fd_compare(const GraphBuilder& f, const std::vector<Tensor>& params,
                           const std::vector<std::string>& names,
                           const std::vector<Tensor>& analytic, double h, double tol,
                           int max_coords_per_block, std::uint64_t coord_seed) {
    if (params.size() != analytic.size() || params.size() != names.size())
        throw ContractError("fd_compare: params/names/analytic size mismatch");
    GradCheckReport report;
    report.h = h;
    report.tol = tol;
    std::vector<Tensor> work = params;
    for (std::size_t b = 0; b < params.size(); ++b) {
        GradCheckBlock block;
        block.name = names[b];
        std::vector<std::size_t> coords;
        const std::size_t count = params[b].size();
        if (max_coords_per_block <= 0 || count <= static_cast<std::size_t>(max_coords_per_block)) {
            coords.resize(count);
            for (std::size_t i = 0; i < count; ++i) coords[i] = i;
        } else {
            SplitMix64 rng(coord_seed + b);
            coords.resize(static_cast<std::size_t>(max_coords_per_block));
            for (auto& c : coords) c = static_cast<std::size_t>(rng.next_u64() % count);
        }
        for (std::size_t c : coords) {
            const Real saved = work[b].values[c];
            work[b].values[c] = saved + static_cast<Real>(h);
            const double up = eval_loss(f, work);
            work[b].values[c] = saved - static_cast<Real>(h);
            const double down = eval_loss(f, work);
            work[b].values[c] = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = static_cast<double>(analytic[b].values[c]);
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            block.max_rel_err = std::max(block.max_rel_err, rel);
        }
        block.pass = block.max_rel_err <= tol;
        report.pass = report.pass && block.pass;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

GradCheckReport grad_check(const GraphBuilder& f, const std::vector<Tensor>& params,
                           const std::vector<std::string>& names, double h, double tol,
                           int max_coords_per_block, std::uint64_t coord_seed) {
    const std::vector<Tensor> analytic = collect_gradients(f, params);
    return fd_compare(f, params, names, analytic, h, tol, max_coords_per_block, coord_seed);
}

GradCheckReport grad_check_stateful(const StatefulBuilder& f, double h, double tol,
                                    int max_coords_per_block, std::uint64_t coord_seed) {
    std::vector<ParamBinding> bindings;
    Graph g;
    const Graph::NodeId loss = f(g, bindings);
    g.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(bindings.size());
    for (const ParamBinding& b : bindings) {
        Tensor gt(b.tensor->shape);
        try {
            gt.values = g.grad(b.node).values;
        } catch (const ContractError&) {
            // unreachable from the loss: zero gradient
        }
        analytic.push_back(std::move(gt));
    }

    GradCheckReport report;
    report.h = h;
    report.tol = tol;
    const auto loss_value = [&]() {
        Graph fresh;
        std::vector<ParamBinding> scratch;
        return static_cast<double>(fresh.value(f(fresh, scratch)).scalar());
    };
    for (std::size_t b = 0; b < bindings.size(); ++b) {
        GradCheckBlock block;
        block.name = bindings[b].name;
        Tensor& param = *bindings[b].tensor;
        std::vector<std::size_t> coords;
        if (max_coords_per_block <= 0 ||
            param.size() <= static_cast<std::size_t>(max_coords_per_block)) {
            coords.resize(param.size());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            SplitMix64 rng(coord_seed + b);
            coords.resize(static_cast<std::size_t>(max_coords_per_block));
            for (auto& c : coords) c = static_cast<std::size_t>(rng.next_u64() % param.size());
        }
        for (std::size_t c : coords) {
            const Real saved = param.values[c];
            param.values[c] = saved + static_cast<Real>(h);
            const double up = loss_value();
            param.values[c] = saved - static_cast<Real>(h);
            const double down = loss_value();
            param.values[c] = saved;
            const double numeric = (up - down) / (2 * h);
            const double a = static_cast<double>(analytic[b].values[c]);
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            block.max_rel_err = std::max(block.max_rel_err, rel);
        }
        block.pass = block.max_rel_err <= tol;
        report.pass = report.pass && block.pass;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

} // namespace sargan
