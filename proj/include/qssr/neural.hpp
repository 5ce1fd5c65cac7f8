// SPDX-License-Identifier: Apache-2.0
//
// qssr: super-resolution hierarchical beam alignment for mmWave arrays
// Copyright (C) 2026 The qssr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef QSSR_NEURAL_HPP
#define QSSR_NEURAL_HPP

#include "qssr/arraymath.hpp"
#include "qssr/channel.hpp"
#include "qssr/optim.hpp"
#include "qssr/rng.hpp"
#include "qssr/search.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qssr {

using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline constexpr std::size_t kFeatureWidth = 8;

// Per-layer network input: four pointings followed by the four powers
// divided by their maximum. Binary layers fill slots 1-2 and leave 3-4 zero.
struct FeatureVector {
    std::array<double, kFeatureWidth> values{};
    bool degenerate = false; // all powers were zero
};

std::vector<FeatureVector> build_features(std::span<const LayerMeasurement> log);

struct NetShape {
    std::size_t input_width = kFeatureWidth;
    std::size_t hidden_width = 64;
    std::size_t gru_layers = 3;
    std::size_t head_width = 64; // two hidden affine layers of this width, then 1 output
};

// Named slice of the flat parameter vector.
struct ParamBlock {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
    Eigen::Index fan_in = 0;
    Eigen::Index size() const { return rows * cols; }
};

struct GruForward; // per-batch activations kept for the backward pass

// Stacked GRU with a fully connected head producing one unbounded output.
// All weights live in one contiguous vector so optimizers and checkpoints
// treat them uniformly.
class QssrNet {
public:
    explicit QssrNet(NetShape shape = {});

    const NetShape &shape() const { return shape_; }
    const std::vector<ParamBlock> &blocks() const { return blocks_; }
    Eigen::Index parameter_count() const { return params_.size(); }
    RealVector &parameters() { return params_; }
    const RealVector &parameters() const { return params_; }

    // Uniform in +-1/sqrt(fan_in).
    void initialize(Rng &rng);

    // Views into any buffer laid out like parameters() (weights or gradients).
    Eigen::Map<RealMatrix> view(RealVector &buffer, std::size_t block) const;
    Eigen::Map<const RealMatrix> view(const RealVector &buffer, std::size_t block) const;
    std::size_t block_index(const std::string &name) const;

    // inputs[t] is input_width x batch for step t. Returns the 1 x batch raw output.
    Eigen::RowVectorXd forward(const std::vector<RealMatrix> &inputs, GruForward *cache = nullptr) const;
    // Accumulates d(sum_b d_output_b * output_b)/d(params) into `grad`.
    void backward(const GruForward &cache, const Eigen::RowVectorXd &d_output, RealVector &grad) const;

    // Top-layer hidden state after the last step (hidden_width x batch).
    RealMatrix final_hidden(const std::vector<RealMatrix> &inputs) const;

private:
    std::size_t add_block(const std::string &name, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);

    struct GruIds { std::size_t wz, uz, bz, wr, ur, br, wh, uh, bh; };
    struct HeadIds { std::size_t w1, b1, w2, b2, w3, b3; };

    NetShape shape_;
    std::vector<ParamBlock> blocks_;
    std::vector<GruIds> gru_;
    HeadIds head_{};
    RealVector params_;

    friend struct GruForward;
};

struct GruForward {
    // [layer][step]
    std::vector<std::vector<RealMatrix>> x, h_prev, z, r, h_cand;
    RealMatrix top, a1, y1, a2, y2;
};

// Stacks a batch of equal-length feature sequences into per-step matrices.
std::vector<RealMatrix> batch_inputs(const std::vector<std::vector<FeatureVector>> &sequences);

// Final top-layer hidden state for one sequence; initial states are zero.
RealVector gru_forward(const QssrNet &net, std::span<const FeatureVector> features);

// Raw network output for one scan log, before wrapping.
double predict_raw(const QssrNet &net, std::span<const LayerMeasurement> log);
// Network output wrapped onto [-1, 1].
NormalizedAngle predict_angle(const QssrNet &net, std::span<const LayerMeasurement> log);

// Uses a trained network in place of the ratio-inversion step of the search.
class NetEstimator final : public AngleEstimator {
public:
    explicit NetEstimator(const QssrNet &net) : net_(&net) {}
    double estimate(std::span<const LayerMeasurement> log) const override;

private:
    const QssrNet *net_;
};

// -|a^H(N_r, rx) H a(N_t, tx)|^2 and its partial derivatives.
struct PowerLoss {
    double value = 0;
    double d_tx = 0;
    double d_rx = 0;
};
PowerLoss power_loss(double tx_angle, double rx_angle, const CMatrix &channel);
inline double loss(double tx_angle, double rx_angle, const CMatrix &channel)
{
    return power_loss(tx_angle, rx_angle, channel).value;
}

struct TrainConfig {
    std::size_t n_tx = 64;
    std::size_t n_rx = 16;
    double snr_min_db = 5.0;
    double snr_max_db = 30.0;
    std::size_t batch_size = 100;
    double lr_initial = 1e-3;
    double lr_decay = 0.95;
    std::size_t lr_decay_every = 10;
    std::size_t epochs = 200;
    std::size_t dataset_size = 20000;
    // Leading epochs that fit the dominant-path angles with the periodic error
    // (2/pi^2)(1 - cos(pi e)) before switching to the received-power objective.
    std::size_t warmup_epochs = 15;
    // Fixed SNR of the warm-up examples; later epochs draw from the range.
    double warmup_snr_db = 30.0;
    // Multiplies the learning rate once the received-power objective takes over.
    double power_lr_scale = 0.1;
    std::uint64_t seed = 1;
    NetShape shape{};

    void validate() const;
};

// Produces training channel `index` (with path metadata).
using ChannelSource = std::function<PathChannel(std::uint64_t index)>;

struct TrainState {
    QssrNet tx_net;
    QssrNet rx_net;
    AdamState tx_adam;
    AdamState rx_adam;
    std::size_t epochs_done = 0;
    std::vector<double> epoch_loss;      // mean -|w^H H f|^2 per epoch
    std::vector<double> epoch_surrogate; // mean of the loss actually minimized

    explicit TrainState(NetShape shape = {}) : tx_net(shape), rx_net(shape) {}
};

// Fresh state with both networks initialized from the config seed.
TrainState initial_train_state(const TrainConfig &config);

using EpochCallback = std::function<void(std::size_t epoch, double loss, double surrogate)>;

// Runs epochs state.epochs_done .. config.epochs-1. All randomness is keyed by
// (seed, epoch, example) so a resumed run continues identically.
void train(const TrainConfig &config, const ChannelSource &source, TrainState &state,
           const EpochCallback &on_epoch = {});
TrainState train(const TrainConfig &config, const ChannelSource &source, const EpochCallback &on_epoch = {});

// One mini-batch with its measurements already collected. Exposed so the
// analytic gradient can be checked against finite differences.
struct TrainingBatch {
    std::vector<std::vector<FeatureVector>> tx_features;
    std::vector<std::vector<FeatureVector>> rx_features;
    std::vector<CMatrix> channels;
    std::vector<double> tx_true;
    std::vector<double> rx_true;
};

enum class LossKind { angle_error, received_power };

struct BatchGradient {
    double loss = 0;      // mean over the batch
    double objective = 0; // mean -power
    RealVector tx_grad;
    RealVector rx_grad;
};
BatchGradient batch_gradient(const QssrNet &tx_net, const QssrNet &rx_net, const TrainingBatch &batch,
                             LossKind kind);

// Collects the measurements of one batch: the tx scan first, then the rx scan
// steered by the current tx network's estimate.
TrainingBatch collect_batch(const TrainConfig &config, const QssrNet &tx_net, const ChannelSource &source,
                            std::span<const std::uint64_t> indices, std::uint64_t epoch);

// Versioned text checkpoint.
void save_checkpoint(const std::filesystem::path &path, const TrainConfig &config, const TrainState &state);
struct Checkpoint {
    TrainConfig config;
    TrainState state;
};
Checkpoint load_checkpoint(const std::filesystem::path &path);

} // namespace qssr

#endif
