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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace qssr;

namespace {

LayerMeasurement layer_with(std::size_t size, std::vector<std::size_t> idx, std::vector<double> powers)
{
    LayerMeasurement m;
    m.layer_size = size;
    m.codeword_indices = idx;
    for (std::size_t i : idx)
        m.pointings.emplace_back(codeword_pointing(size, i));
    m.powers = std::move(powers);
    m.chosen_index = argmax_lowest(m.powers);
    return m;
}

NetShape small_shape()
{
    NetShape s;
    s.hidden_width = 5;
    s.gru_layers = 2;
    s.head_width = 6;
    return s;
}

TrainConfig small_config()
{
    TrainConfig c;
    c.n_tx = 16;
    c.n_rx = 16;
    c.snr_min_db = 20;
    c.snr_max_db = 30;
    c.batch_size = 50;
    c.dataset_size = 400;
    c.epochs = 4;
    c.warmup_epochs = 1;
    c.lr_initial = 3e-3;
    c.shape = small_shape();
    c.seed = 11;
    return c;
}

ChannelSource los_source(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed)
{
    const auto cfg = ChannelEnsembleConfig::los(n_tx, n_rx, seed);
    return [cfg](std::uint64_t i) { return ensemble_member(cfg, i); };
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Element-by-element GRU and head, written independently of the batched code.
double scalar_net(const QssrNet &net, const std::vector<FeatureVector> &seq)
{
    const NetShape &s = net.shape();
    const RealVector &P = net.parameters();
    auto at = [&](const std::string &name, Eigen::Index i, Eigen::Index j) {
        const ParamBlock &b = net.blocks()[net.block_index(name)];
        return P[b.offset + i + j * b.rows]; // column-major block storage
    };
    const auto H = static_cast<Eigen::Index>(s.hidden_width);
    std::vector<std::vector<double>> inputs;
    for (const FeatureVector &f : seq)
        inputs.emplace_back(f.values.begin(), f.values.end());
    for (std::size_t l = 0; l < s.gru_layers; ++l) {
        const std::string p = "gru" + std::to_string(l) + ".";
        std::vector<double> h(H, 0.0);
        std::vector<std::vector<double>> outs;
        for (const auto &x : inputs) {
            std::vector<double> z(H), r(H), next(H);
            for (Eigen::Index i = 0; i < H; ++i) {
                double az = at(p + "b_z", i, 0), ar = at(p + "b_r", i, 0);
                for (std::size_t j = 0; j < x.size(); ++j) {
                    az += at(p + "w_z", i, j) * x[j];
                    ar += at(p + "w_r", i, j) * x[j];
                }
                for (Eigen::Index j = 0; j < H; ++j) {
                    az += at(p + "u_z", i, j) * h[j];
                    ar += at(p + "u_r", i, j) * h[j];
                }
                z[i] = sigmoid(az);
                r[i] = sigmoid(ar);
            }
            for (Eigen::Index i = 0; i < H; ++i) {
                double ah = at(p + "b_h", i, 0);
                for (std::size_t j = 0; j < x.size(); ++j)
                    ah += at(p + "w_h", i, j) * x[j];
                for (Eigen::Index j = 0; j < H; ++j)
                    ah += at(p + "u_h", i, j) * r[j] * h[j];
                next[i] = (1 - z[i]) * h[i] + z[i] * std::tanh(ah);
            }
            h = next;
            outs.push_back(h);
        }
        inputs = outs;
    }
    std::vector<double> v = inputs.back();
    for (const char *layer : {"1", "2"}) {
        const std::string w = std::string("head.w") + layer, b = std::string("head.b") + layer;
        const ParamBlock &blk = net.blocks()[net.block_index(w)];
        std::vector<double> y(blk.rows);
        for (Eigen::Index i = 0; i < blk.rows; ++i) {
            double a = at(b, i, 0);
            for (Eigen::Index j = 0; j < blk.cols; ++j)
                a += at(w, i, j) * v[j];
            y[i] = std::max(a, 0.0);
        }
        v = y;
    }
    double out = at("head.b3", 0, 0);
    for (std::size_t j = 0; j < v.size(); ++j)
        out += at("head.w3", 0, j) * v[j];
    return out;
}

void check_gradients(const QssrNet &tx, const QssrNet &rx, const TrainingBatch &batch, LossKind kind)
{
    const BatchGradient g = batch_gradient(tx, rx, batch, kind);
    const double h = 1e-6;
    Rng pick(99);
    for (int side = 0; side < 2; ++side) {
        const QssrNet &net = side == 0 ? tx : rx;
        const RealVector &grad = side == 0 ? g.tx_grad : g.rx_grad;
        for (const ParamBlock &b : net.blocks()) {
            for (int k = 0; k < 3; ++k) {
                const Eigen::Index i = b.offset + static_cast<Eigen::Index>(pick.uniform(0, 1) * b.size()) % b.size();
                QssrNet plus = net, minus = net;
                plus.parameters()[i] += h;
                minus.parameters()[i] -= h;
                const double lp = side == 0 ? batch_gradient(plus, rx, batch, kind).loss
                                            : batch_gradient(tx, plus, batch, kind).loss;
                const double lm = side == 0 ? batch_gradient(minus, rx, batch, kind).loss
                                            : batch_gradient(tx, minus, batch, kind).loss;
                const double fd = (lp - lm) / (2 * h);
                INFO(b.name << " entry " << i - b.offset);
                CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::abs(fd)) + 1e-7);
            }
        }
    }
}

} // namespace

TEST_CASE("feature construction")
{
    const LayerMeasurement m = layer_with(16, {5, 6, 7, 8}, {4, 2, 1, 1});
    const auto f = build_features(std::span(&m, 1));
    REQUIRE(f.size() == 1);
    CHECK(f[0].values[4] == 1.0);
    CHECK(f[0].values[5] == 0.5);
    CHECK(f[0].values[6] == 0.25);
    CHECK(f[0].values[7] == 0.25);
    CHECK(f[0].values[0] == doctest::Approx(codeword_pointing(16, 5)));
    CHECK_FALSE(f[0].degenerate);

    const LayerMeasurement zero = layer_with(16, {1, 2, 3, 4}, {0, 0, 0, 0});
    const auto d = build_features(std::span(&zero, 1));
    CHECK(d[0].degenerate);
    CHECK(d[0].values[4] == 1.0);
    CHECK(d[0].values[5] == 0.0);

    const LayerMeasurement bin = layer_with(32, {9, 10}, {1, 3});
    const auto b = build_features(std::span(&bin, 1));
    CHECK(b[0].values[2] == 0.0);
    CHECK(b[0].values[4] == doctest::Approx(1.0 / 3));
    CHECK(b[0].values[5] == 1.0);
    CHECK(b[0].values[7] == 0.0);
}

TEST_CASE("features from a scan are scale invariant")
{
    const auto cfg = ChannelEnsembleConfig::los(64, 16, 2);
    const PathChannel ch = ensemble_member(cfg, 3);
    Rng rng(1);
    const AlignmentResult r = qssr_search(ch.matrix, 0.0, rng);
    const auto f = build_features(r.tx_log());
    CHECK(f.size() == 3);
    auto scaled = r.tx_log();
    for (auto &l : scaled)
        for (double &p : l.powers)
            p *= 37.5;
    const auto g = build_features(scaled);
    for (std::size_t s = 0; s < f.size(); ++s)
        for (std::size_t k = 0; k < kFeatureWidth; ++k)
            CHECK(g[s].values[k] == doctest::Approx(f[s].values[k]).epsilon(1e-14));
}

TEST_CASE("zero weights give a zero hidden state")
{
    QssrNet net(small_shape());
    net.parameters().setZero();
    const LayerMeasurement m = layer_with(16, {5, 6, 7, 8}, {4, 2, 1, 1});
    std::vector<FeatureVector> seq = build_features(std::span(&m, 1));
    seq.push_back(seq[0]);
    CHECK(gru_forward(net, seq).norm() == 0.0);
    CHECK(gru_forward(net, {}).norm() == 0.0);
    FeatureVector bad;
    bad.values[0] = NAN;
    std::vector<FeatureVector> broken{bad};
    CHECK_THROWS(gru_forward(net, broken));
}

TEST_CASE("batched network matches the scalar reference")
{
    QssrNet net(NetShape{kFeatureWidth, 7, 3, 9});
    Rng rng(3);
    net.initialize(rng);
    for (Eigen::Index i = 0; i < net.parameter_count(); ++i)
        net.parameters()[i] += rng.uniform(-0.3, 0.3); // leave some ReLUs active
    const auto cfg = ChannelEnsembleConfig::los(64, 16, 4);
    std::vector<std::vector<FeatureVector>> seqs;
    for (int t = 0; t < 12; ++t) {
        const PathChannel ch = ensemble_member(cfg, t);
        Rng noise(t);
        seqs.push_back(build_features(qssr_search(ch.matrix, 0.01, noise).tx_log()));
    }
    const Eigen::RowVectorXd out = net.forward(batch_inputs(seqs));
    for (std::size_t b = 0; b < seqs.size(); ++b)
        CHECK(std::abs(out(b) - scalar_net(net, seqs[b])) < 1e-10);
}

TEST_CASE("initialization bounds")
{
    QssrNet net;
    Rng rng(5);
    net.initialize(rng);
    for (std::size_t b = 0; b < net.blocks().size(); ++b) {
        const ParamBlock &blk = net.blocks()[b];
        const double bound = 1.0 / std::sqrt(static_cast<double>(blk.fan_in));
        CHECK(net.view(net.parameters(), b).cwiseAbs().maxCoeff() <= bound);
    }
    CHECK(net.block_index("head.w3") == net.blocks().size() - 2);
    CHECK_THROWS(net.block_index("head.w9"));
}

TEST_CASE("output wrapping")
{
    CHECK(wrap_angle(1.3) == doctest::Approx(-0.7));
    QssrNet net(small_shape());
    net.parameters().setZero();
    net.parameters()[net.blocks()[net.block_index("head.b3")].offset] = 1.3;
    const LayerMeasurement m = layer_with(16, {5, 6, 7, 8}, {4, 2, 1, 1});
    CHECK(predict_raw(net, std::span(&m, 1)) == doctest::Approx(1.3));
    CHECK(predict_angle(net, std::span(&m, 1)).value() == doctest::Approx(-0.7));
}

TEST_CASE("received-power loss")
{
    const double phi = 0.37, theta = -0.58;
    PathChannel ch;
    ch.paths = {PathParams{Complex(1, 0), NormalizedAngle(theta), NormalizedAngle(phi)}};
    ch.matrix = compose_paths(ch.paths, 16, 64);
    const PowerLoss at = power_loss(phi, theta, ch.matrix);
    CHECK(at.value == doctest::Approx(-1.0));
    CHECK(std::abs(at.d_tx) < 1e-9);
    CHECK(std::abs(at.d_rx) < 1e-9);
    CHECK(loss(phi + 0.01, theta, ch.matrix) > -1.0);

    const auto cfg = ChannelEnsembleConfig::nlos(64, 16, 5);
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const CMatrix H = ensemble_member(cfg, t).matrix;
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), h = 1e-6;
        const PowerLoss p = power_loss(a, b, H);
        CHECK(p.value <= 0.0);
        CHECK(p.value >= -1.0 - 1e-12);
        CHECK(p.d_tx == doctest::Approx((loss(a + h, b, H) - loss(a - h, b, H)) / (2 * h)).epsilon(1e-5));
        CHECK(p.d_rx == doctest::Approx((loss(a, b + h, H) - loss(a, b - h, H)) / (2 * h)).epsilon(1e-5));
        // sine-space period 2 on both sides
        CHECK(loss(a + 2, b, H) == doctest::Approx(p.value).epsilon(1e-12));
        CHECK(loss(a, b - 2, H) == doctest::Approx(p.value).epsilon(1e-12));
        // conjugate symmetry of the bilinear form
        CHECK(loss(-a, -b, H.conjugate()) == doctest::Approx(p.value).epsilon(1e-10));
    }
}

TEST_CASE("backpropagation matches finite differences")
{
    TrainConfig cfg = small_config();
    const ChannelSource source = los_source(cfg.n_tx, cfg.n_rx, 8);
    TrainState state = initial_train_state(cfg);
    const std::vector<std::uint64_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
    TrainingBatch batch = collect_batch(cfg, state.tx_net, source, idx, 0);
    check_gradients(state.tx_net, state.rx_net, batch, LossKind::received_power);
    check_gradients(state.tx_net, state.rx_net, batch, LossKind::angle_error);

    train(cfg, source, state);
    batch = collect_batch(cfg, state.tx_net, source, idx, cfg.epochs);
    check_gradients(state.tx_net, state.rx_net, batch, LossKind::received_power);
}

TEST_CASE("training config validation")
{
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS(c.validate());
    c = TrainConfig{};
    c.snr_min_db = 40;
    CHECK_THROWS(c.validate());
    c = TrainConfig{};
    c.n_tx = 48;
    CHECK_THROWS(c.validate());
    CHECK_NOTHROW(TrainConfig{}.validate());
}

TEST_CASE("checkpoint round trip and resume")
{
    const TrainConfig cfg = small_config();
    const ChannelSource source = los_source(cfg.n_tx, cfg.n_rx, 9);
    const TrainState full = train(cfg, source);
    REQUIRE(full.epoch_loss.size() == cfg.epochs);

    TrainConfig half = cfg;
    half.epochs = 2;
    TrainState part = train(half, source);
    const auto path = std::filesystem::temp_directory_path() / "qssr_test_resume.ckpt";
    save_checkpoint(path, half, part);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.state.tx_net.parameters() == part.tx_net.parameters());
    CHECK(loaded.state.rx_adam.v == part.rx_adam.v);
    CHECK(loaded.state.epochs_done == 2);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.config.shape.hidden_width == 5);

    const auto ch = ensemble_member(ChannelEnsembleConfig::los(16, 16, 3), 0);
    Rng rng(1);
    const AlignmentResult r = qssr_search(ch.matrix, 0.01, rng);
    CHECK(predict_raw(loaded.state.tx_net, r.tx_log()) == predict_raw(part.tx_net, r.tx_log()));

    train(cfg, source, loaded.state);
    CHECK(loaded.state.tx_net.parameters() == full.tx_net.parameters());
    CHECK(loaded.state.rx_net.parameters() == full.rx_net.parameters());
    CHECK(loaded.state.epoch_loss == full.epoch_loss);

    // shape mismatch is rejected
    std::ifstream in(path);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = text.find("block gru0.w_z 5 8");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 18, "block gru0.w_z 6 8");
    std::ofstream(path) << text;
    CHECK_THROWS(load_checkpoint(path));
    std::ofstream(path) << "QSSRNET 9\n";
    CHECK_THROWS(load_checkpoint(path));
    std::filesystem::remove(path);
}

TEST_CASE("training improves the received power")
{
    TrainConfig cfg = small_config();
    cfg.shape = NetShape{kFeatureWidth, 16, 2, 16};
    cfg.dataset_size = 2000;
    cfg.epochs = 12;
    cfg.warmup_epochs = 4;
    const ChannelSource source = los_source(cfg.n_tx, cfg.n_rx, 12);
    TrainState state = initial_train_state(cfg);
    const TrainState untrained = state;
    train(cfg, source, state);

    const ChannelSource held_out = los_source(cfg.n_tx, cfg.n_rx, 13);
    std::vector<std::uint64_t> idx(500);
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = i;
    const TrainingBatch before = collect_batch(cfg, untrained.tx_net, held_out, idx, 0);
    const TrainingBatch after = collect_batch(cfg, state.tx_net, held_out, idx, 0);
    const double p0 = -batch_gradient(untrained.tx_net, untrained.rx_net, before, LossKind::received_power).objective;
    const double p1 = -batch_gradient(state.tx_net, state.rx_net, after, LossKind::received_power).objective;
    MESSAGE("untrained " << p0 << " trained " << p1);
    CHECK(p1 > 2 * p0);
    CHECK(state.epoch_loss.back() < state.epoch_loss.front());
}
