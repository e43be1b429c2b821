#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sargan/nets.hpp"
#include "sargan/tensor.hpp"

namespace sargan {

struct TrainConfig {
    double learning_rate = 2e-4;
    int batch_size = 4;   // paper setting: 12
    double lambda_a = 0.1;
    int looks = 1;
    int epochs = 50;
    std::uint64_t seed = 0;
    int image_size = 64;  // paper setting: 512
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int d_steps_per_g_step = 1;
    bool despeckle_only = false; // train G_D with the L1 objective only
    std::string out_dir;         // empty: keep everything in memory
    int checkpoint_every = 1;    // epochs between checkpoint writes

    void validate() const; // throws ConfigError
};

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers, one per parameter tensor, plus the shared
// bias-correction step counter.
struct AdamState {
    std::vector<Tensor> m, v;
    std::int64_t t = 0;

    void init(const std::vector<Tensor*>& params);
    bool empty() const { return m.empty(); }
};

// One bias-corrected update over all parameter tensors; moments are created
// on first use and t advances by one.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg);

struct TrainPair {
    Tensor y; // {1,H,W} unclamped speckled grayscale
    Tensor x; // {3,H,W} clean RGB truth
};

// Pairs with a fixed trailing test split (last tenth, rounded down).
struct PairDataset {
    std::vector<TrainPair> pairs;
    std::size_t train_count = 0;

    std::size_t test_count() const { return pairs.size() - train_count; }
    const TrainPair& train_pair(std::size_t i) const { return pairs[i]; }
    const TrainPair& test_pair(std::size_t i) const { return pairs[train_count + i]; }
};

// Y = speckle field (.) gray(X), deterministic per seed.
PairDataset make_pair_dataset(const std::vector<Tensor>& clean_rgb, int looks,
                              std::uint64_t seed);

struct TraceRow {
    std::int64_t step = 0;
    double l_d = 0;     // despeckling L1
    double l_c_l1 = 0;  // colorization L1
    double l_c_adv = 0; // raw adversarial generator loss
    double l_total = 0; // l_d + l_c_l1 + lambda_a * l_c_adv
    double d_loss = 0;  // discriminator objective
};

std::string trace_csv(const std::vector<TraceRow>& trace);

struct Checkpoint {
    std::int64_t epoch = 0;
    std::int64_t step = 0;
    GanModel model;
    AdamState adam_g, adam_d;
    std::uint64_t rng_state = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TraceRow> trace;
};

// Called after each epoch; return false to stop early.
using EpochCallback =
    std::function<bool(int epoch, const Checkpoint& ck, const std::vector<TraceRow>& trace)>;

// Alternating D / G optimization over shuffled mini-batches. Per batch the
// discriminator trains on real images and detached fakes, then the generator
// trains through both sub-networks on L = L_D + L_C. Deterministic per
// config; aborts with NumericError naming the first non-finite tensor.
TrainResult train_gan(const PairDataset& data, const TrainConfig& cfg,
                      const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {});

} // namespace sargan
