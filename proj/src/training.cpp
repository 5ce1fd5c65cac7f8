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

#include "qssr/neural.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qssr {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kInitDomain = 0x1A17;
constexpr std::uint64_t kExampleDomain = 0xE8A3;
constexpr std::uint64_t kShuffleDomain = 0x5F1E;

double learning_rate(const TrainConfig &config, std::size_t epoch)
{
    const auto decays = static_cast<double>(epoch / config.lr_decay_every);
    const double scale = epoch < config.warmup_epochs ? 1.0 : config.power_lr_scale;
    return scale * config.lr_initial * std::pow(config.lr_decay, decays);
}

} // namespace

void TrainConfig::validate() const
{
    auto fail = [](const std::string &field, const std::string &why) {
        throw std::invalid_argument("TrainConfig." + field + ": " + why);
    };
    if (n_tx < 2)
        fail("n_tx", "must be >= 2");
    if (n_rx < 2)
        fail("n_rx", "must be >= 2");
    if (!is_power_of_two(n_tx))
        fail("n_tx", "must be a power of two");
    if (!is_power_of_two(n_rx))
        fail("n_rx", "must be a power of two");
    if (!(snr_min_db <= snr_max_db))
        fail("snr_max_db", "must be >= snr_min_db");
    if (batch_size == 0)
        fail("batch_size", "must be positive");
    if (!(lr_initial > 0.0))
        fail("lr_initial", "must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0))
        fail("lr_decay", "must lie in (0, 1]");
    if (lr_decay_every == 0)
        fail("lr_decay_every", "must be positive");
    if (!std::isfinite(warmup_snr_db))
        fail("warmup_snr_db", "must be finite");
    if (!(power_lr_scale > 0.0))
        fail("power_lr_scale", "must be positive");
    if (dataset_size == 0)
        fail("dataset_size", "must be positive");
}

TrainState initial_train_state(const TrainConfig &config)
{
    TrainState state(config.shape);
    Rng tx_rng(config.seed, stream_key(kInitDomain, 0));
    Rng rx_rng(config.seed, stream_key(kInitDomain, 1));
    state.tx_net.initialize(tx_rng);
    state.rx_net.initialize(rx_rng);
    state.tx_adam.reset(state.tx_net.parameter_count());
    state.rx_adam.reset(state.rx_net.parameter_count());
    return state;
}

TrainingBatch collect_batch(const TrainConfig &config, const QssrNet &tx_net, const ChannelSource &source,
                            std::span<const std::uint64_t> indices, std::uint64_t epoch)
{
    const IdentityShaper shaper;
    TrainingBatch batch;
    std::vector<Rng> rngs;
    std::vector<double> noise;
    rngs.reserve(indices.size());
    for (std::uint64_t index : indices) {
        PathChannel channel = source(index);
        if (channel.n_tx != config.n_tx || channel.n_rx != config.n_rx)
            throw std::invalid_argument("collect_batch: channel dimensions differ from the training config");
        Rng rng(config.seed, stream_key(kExampleDomain, epoch, index));
        const double drawn = rng.uniform(config.snr_min_db, config.snr_max_db);
        const double snr_db = epoch < config.warmup_epochs ? config.warmup_snr_db : drawn;
        noise.push_back(noise_std_for_snr_db(snr_db));
        MeasurementLink link(channel.matrix, noise.back(), rng);
        const SideScan scan = quaternary_scan(Side::tx, config.n_tx, link, shaper, quasi_omni(config.n_rx));
        batch.tx_features.push_back(build_features(scan.layers));
        const PathParams &dominant = channel.dominant();
        batch.tx_true.push_back(dominant.aod.value());
        batch.rx_true.push_back(dominant.aoa.value());
        batch.channels.push_back(std::move(channel.matrix));
        rngs.push_back(rng);
    }

    const Eigen::RowVectorXd tx_raw = tx_net.forward(batch_inputs(batch.tx_features));
    for (std::size_t b = 0; b < indices.size(); ++b) {
        MeasurementLink link(batch.channels[b], noise[b], rngs[b]);
        const CVector f = steering(config.n_tx, wrap_angle(tx_raw(static_cast<Eigen::Index>(b))));
        const SideScan scan = quaternary_scan(Side::rx, config.n_rx, link, shaper, f);
        batch.rx_features.push_back(build_features(scan.layers));
    }
    return batch;
}

BatchGradient batch_gradient(const QssrNet &tx_net, const QssrNet &rx_net, const TrainingBatch &batch,
                             LossKind kind)
{
    const std::size_t n = batch.channels.size();
    if (n == 0 || batch.tx_features.size() != n || batch.rx_features.size() != n)
        throw std::invalid_argument("batch_gradient: inconsistent batch");
    GruForward tx_cache;
    GruForward rx_cache;
    const Eigen::RowVectorXd tx_raw = tx_net.forward(batch_inputs(batch.tx_features), &tx_cache);
    const Eigen::RowVectorXd rx_raw = rx_net.forward(batch_inputs(batch.rx_features), &rx_cache);

    const auto count = static_cast<double>(n);
    Eigen::RowVectorXd d_tx(static_cast<Eigen::Index>(n));
    Eigen::RowVectorXd d_rx(static_cast<Eigen::Index>(n));
    BatchGradient out;
    for (std::size_t b = 0; b < n; ++b) {
        const auto i = static_cast<Eigen::Index>(b);
        const PowerLoss p = power_loss(tx_raw(i), rx_raw(i), batch.channels[b]);
        out.objective += p.value / count;
        if (kind == LossKind::received_power) {
            out.loss += p.value / count;
            d_tx(i) = p.d_tx / count;
            d_rx(i) = p.d_rx / count;
        } else {
            const double e_tx = wrap_angle(tx_raw(i) - batch.tx_true[b]);
            const double e_rx = wrap_angle(rx_raw(i) - batch.rx_true[b]);
            // (2/pi^2)(1 - cos(pi e)): e^2 near zero, bounded for far misses
            const double k = 2.0 / (kPi * kPi);
            out.loss += k * (2.0 - std::cos(kPi * e_tx) - std::cos(kPi * e_rx)) / count;
            d_tx(i) = k * kPi * std::sin(kPi * e_tx) / count;
            d_rx(i) = k * kPi * std::sin(kPi * e_rx) / count;
        }
    }
    out.tx_grad = RealVector::Zero(tx_net.parameter_count());
    out.rx_grad = RealVector::Zero(rx_net.parameter_count());
    tx_net.backward(tx_cache, d_tx, out.tx_grad);
    rx_net.backward(rx_cache, d_rx, out.rx_grad);
    return out;
}

void train(const TrainConfig &config, const ChannelSource &source, TrainState &state, const EpochCallback &on_epoch)
{
    config.validate();
    if (!source)
        throw std::invalid_argument("train: no channel source");
    std::vector<std::uint64_t> order(config.dataset_size);
    for (std::size_t epoch = state.epochs_done; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::uint64_t{0});
        Rng shuffle(config.seed, stream_key(kShuffleDomain, epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.next_u64() % i]);

        const LossKind kind = epoch < config.warmup_epochs ? LossKind::angle_error : LossKind::received_power;
        const double lr = learning_rate(config, epoch);
        double loss_sum = 0;
        double objective_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t len = std::min(config.batch_size, order.size() - start);
            const std::span<const std::uint64_t> indices(order.data() + start, len);
            const TrainingBatch batch = collect_batch(config, state.tx_net, source, indices, epoch);
            const BatchGradient g = batch_gradient(state.tx_net, state.rx_net, batch, kind);
            if (!std::isfinite(g.loss) || !g.tx_grad.allFinite() || !g.rx_grad.allFinite()) {
                std::ostringstream msg;
                msg << "train: non-finite loss or gradient at epoch " << epoch << ", batch " << batches
                    << " (loss " << g.loss << ", lr " << lr << ")";
                throw std::runtime_error(msg.str());
            }
            adam_step(state.tx_net.parameters(), g.tx_grad, state.tx_adam, lr);
            adam_step(state.rx_net.parameters(), g.rx_grad, state.rx_adam, lr);
            loss_sum += g.loss;
            objective_sum += g.objective;
            ++batches;
        }
        const double objective = objective_sum / static_cast<double>(batches);
        const double surrogate = loss_sum / static_cast<double>(batches);
        state.epoch_loss.push_back(objective);
        state.epoch_surrogate.push_back(surrogate);
        state.epochs_done = epoch + 1;
        if (on_epoch)
            on_epoch(epoch, objective, surrogate);
    }
}

TrainState train(const TrainConfig &config, const ChannelSource &source, const EpochCallback &on_epoch)
{
    TrainState state = initial_train_state(config);
    train(config, source, state, on_epoch);
    return state;
}

} // namespace qssr
