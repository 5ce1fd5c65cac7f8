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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qssr {

namespace {

constexpr double kPi = std::numbers::pi;

RealMatrix sigmoid(const RealMatrix &a)
{
    return (1.0 + (-a.array()).exp()).inverse().matrix();
}

} // namespace

std::vector<FeatureVector> build_features(std::span<const LayerMeasurement> log)
{
    std::vector<FeatureVector> out;
    out.reserve(log.size());
    for (const LayerMeasurement &layer : log) {
        const std::size_t beams = layer.beam_count();
        if (beams == 0 || beams > 4 || layer.pointings.size() != beams)
            throw std::invalid_argument("build_features: layer must hold 1-4 beams with pointings");
        FeatureVector f;
        const double peak = *std::max_element(layer.powers.begin(), layer.powers.end());
        f.degenerate = !(peak > 0.0);
        for (std::size_t i = 0; i < beams; ++i) {
            f.values[i] = layer.pointings[i].value();
            f.values[4 + i] = f.degenerate ? 0.0 : layer.powers[i] / peak;
        }
        if (f.degenerate)
            f.values[4 + argmax_lowest(layer.powers) - 1] = 1.0;
        out.push_back(f);
    }
    return out;
}

QssrNet::QssrNet(NetShape shape) : shape_(shape)
{
    if (shape_.input_width == 0 || shape_.hidden_width == 0 || shape_.gru_layers == 0 || shape_.head_width == 0)
        throw std::invalid_argument("QssrNet: all widths and the layer count must be positive");
    const auto H = static_cast<Eigen::Index>(shape_.hidden_width);
    const auto F = static_cast<Eigen::Index>(shape_.head_width);
    for (std::size_t l = 0; l < shape_.gru_layers; ++l) {
        const Eigen::Index in = l == 0 ? static_cast<Eigen::Index>(shape_.input_width) : H;
        const std::string p = "gru" + std::to_string(l) + ".";
        GruIds g{};
        g.wz = add_block(p + "w_z", H, in, H);
        g.uz = add_block(p + "u_z", H, H, H);
        g.bz = add_block(p + "b_z", H, 1, H);
        g.wr = add_block(p + "w_r", H, in, H);
        g.ur = add_block(p + "u_r", H, H, H);
        g.br = add_block(p + "b_r", H, 1, H);
        g.wh = add_block(p + "w_h", H, in, H);
        g.uh = add_block(p + "u_h", H, H, H);
        g.bh = add_block(p + "b_h", H, 1, H);
        gru_.push_back(g);
    }
    head_.w1 = add_block("head.w1", F, H, H);
    head_.b1 = add_block("head.b1", F, 1, H);
    head_.w2 = add_block("head.w2", F, F, F);
    head_.b2 = add_block("head.b2", F, 1, F);
    head_.w3 = add_block("head.w3", 1, F, F);
    head_.b3 = add_block("head.b3", 1, 1, F);
    params_ = RealVector::Zero(blocks_.back().offset + blocks_.back().size());
}

std::size_t QssrNet::add_block(const std::string &name, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in)
{
    ParamBlock b;
    b.name = name;
    b.rows = rows;
    b.cols = cols;
    b.fan_in = fan_in;
    b.offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size();
    blocks_.push_back(b);
    return blocks_.size() - 1;
}

void QssrNet::initialize(Rng &rng)
{
    for (const ParamBlock &b : blocks_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
        for (Eigen::Index i = 0; i < b.size(); ++i)
            params_[b.offset + i] = rng.uniform(-bound, bound);
    }
}

Eigen::Map<RealMatrix> QssrNet::view(RealVector &buffer, std::size_t block) const
{
    const ParamBlock &b = blocks_.at(block);
    return {buffer.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const RealMatrix> QssrNet::view(const RealVector &buffer, std::size_t block) const
{
    const ParamBlock &b = blocks_.at(block);
    return {buffer.data() + b.offset, b.rows, b.cols};
}

std::size_t QssrNet::block_index(const std::string &name) const
{
    for (std::size_t i = 0; i < blocks_.size(); ++i)
        if (blocks_[i].name == name)
            return i;
    throw std::out_of_range("QssrNet: no parameter block named " + name);
}

Eigen::RowVectorXd QssrNet::forward(const std::vector<RealMatrix> &inputs, GruForward *cache) const
{
    if (inputs.empty())
        throw std::invalid_argument("QssrNet::forward: empty input sequence");
    const Eigen::Index batch = inputs.front().cols();
    const auto H = static_cast<Eigen::Index>(shape_.hidden_width);
    const std::size_t steps = inputs.size();
    for (const RealMatrix &x : inputs)
        if (x.rows() != static_cast<Eigen::Index>(shape_.input_width) || x.cols() != batch)
            throw std::invalid_argument("QssrNet::forward: input step has wrong shape");

    const RealVector &P = params_;
    GruForward local;
    GruForward &c = cache ? *cache : local;
    const std::size_t L = shape_.gru_layers;
    c.x.assign(L, std::vector<RealMatrix>(steps));
    c.h_prev = c.z = c.r = c.h_cand = c.x;

    std::vector<RealMatrix> layer_in = inputs;
    for (std::size_t l = 0; l < L; ++l) {
        const GruIds &g = gru_[l];
        RealMatrix h = RealMatrix::Zero(H, batch);
        for (std::size_t t = 0; t < steps; ++t) {
            const RealMatrix &x = layer_in[t];
            RealMatrix az = view(P, g.wz) * x + view(P, g.uz) * h;
            az.colwise() += view(P, g.bz).col(0);
            RealMatrix ar = view(P, g.wr) * x + view(P, g.ur) * h;
            ar.colwise() += view(P, g.br).col(0);
            RealMatrix z = sigmoid(az);
            RealMatrix r = sigmoid(ar);
            RealMatrix ah = view(P, g.wh) * x + view(P, g.uh) * r.cwiseProduct(h);
            ah.colwise() += view(P, g.bh).col(0);
            RealMatrix hc = ah.array().tanh().matrix();
            RealMatrix next = (1.0 - z.array()) * h.array() + z.array() * hc.array();
            c.x[l][t] = x;
            c.h_prev[l][t] = h;
            c.z[l][t] = std::move(z);
            c.r[l][t] = std::move(r);
            c.h_cand[l][t] = std::move(hc);
            h = std::move(next);
            layer_in[t] = h;
        }
    }
    c.top = layer_in.back();
    c.a1 = view(P, head_.w1) * c.top;
    c.a1.colwise() += view(P, head_.b1).col(0);
    c.y1 = c.a1.cwiseMax(0.0);
    c.a2 = view(P, head_.w2) * c.y1;
    c.a2.colwise() += view(P, head_.b2).col(0);
    c.y2 = c.a2.cwiseMax(0.0);
    Eigen::RowVectorXd out = view(P, head_.w3) * c.y2;
    out.array() += view(P, head_.b3)(0, 0);
    return out;
}

void QssrNet::backward(const GruForward &c, const Eigen::RowVectorXd &d_output, RealVector &grad) const
{
    if (grad.size() != params_.size())
        grad = RealVector::Zero(params_.size());
    const RealVector &P = params_;
    const Eigen::Index batch = c.top.cols();
    if (d_output.size() != batch)
        throw std::invalid_argument("QssrNet::backward: gradient does not match batch size");
    const auto H = static_cast<Eigen::Index>(shape_.hidden_width);

    view(grad, head_.w3).noalias() += d_output * c.y2.transpose();
    view(grad, head_.b3)(0, 0) += d_output.sum();
    RealMatrix d2 = view(P, head_.w3).transpose() * d_output;
    d2.array() *= (c.a2.array() > 0.0).cast<double>();
    view(grad, head_.w2).noalias() += d2 * c.y1.transpose();
    view(grad, head_.b2) += d2.rowwise().sum();
    RealMatrix d1 = view(P, head_.w2).transpose() * d2;
    d1.array() *= (c.a1.array() > 0.0).cast<double>();
    view(grad, head_.w1).noalias() += d1 * c.top.transpose();
    view(grad, head_.b1) += d1.rowwise().sum();
    RealMatrix d_top = view(P, head_.w1).transpose() * d1;

    const std::size_t steps = c.x.front().size();
    // d_out[t]: gradient arriving at this layer's output h_t from above.
    std::vector<RealMatrix> d_out(steps, RealMatrix::Zero(H, batch));
    d_out.back() = d_top;
    for (std::size_t l = shape_.gru_layers; l-- > 0;) {
        const GruIds &g = gru_[l];
        std::vector<RealMatrix> d_in(steps);
        RealMatrix carry = RealMatrix::Zero(H, batch);
        for (std::size_t t = steps; t-- > 0;) {
            const RealMatrix dh = d_out[t] + carry;
            const RealMatrix &hp = c.h_prev[l][t];
            const RealMatrix &z = c.z[l][t];
            const RealMatrix &r = c.r[l][t];
            const RealMatrix &hc = c.h_cand[l][t];
            const RealMatrix &x = c.x[l][t];

            const RealMatrix dah = (dh.array() * z.array() * (1.0 - hc.array().square())).matrix();
            const RealMatrix daz = (dh.array() * (hc.array() - hp.array()) * z.array() * (1.0 - z.array())).matrix();
            const RealMatrix rh = r.cwiseProduct(hp);
            const RealMatrix d_rh = view(P, g.uh).transpose() * dah;
            const RealMatrix dar = (d_rh.array() * hp.array() * r.array() * (1.0 - r.array())).matrix();

            view(grad, g.wh).noalias() += dah * x.transpose();
            view(grad, g.uh).noalias() += dah * rh.transpose();
            view(grad, g.bh) += dah.rowwise().sum();
            view(grad, g.wz).noalias() += daz * x.transpose();
            view(grad, g.uz).noalias() += daz * hp.transpose();
            view(grad, g.bz) += daz.rowwise().sum();
            view(grad, g.wr).noalias() += dar * x.transpose();
            view(grad, g.ur).noalias() += dar * hp.transpose();
            view(grad, g.br) += dar.rowwise().sum();

            carry = (dh.array() * (1.0 - z.array())).matrix() + d_rh.cwiseProduct(r) +
                    view(P, g.uz).transpose() * daz + view(P, g.ur).transpose() * dar;
            if (l > 0)
                d_in[t] = view(P, g.wh).transpose() * dah + view(P, g.wz).transpose() * daz +
                          view(P, g.wr).transpose() * dar;
        }
        if (l > 0)
            d_out = std::move(d_in);
    }
}

RealMatrix QssrNet::final_hidden(const std::vector<RealMatrix> &inputs) const
{
    GruForward cache;
    forward(inputs, &cache);
    return cache.top;
}

std::vector<RealMatrix> batch_inputs(const std::vector<std::vector<FeatureVector>> &sequences)
{
    if (sequences.empty())
        throw std::invalid_argument("batch_inputs: empty batch");
    const std::size_t steps = sequences.front().size();
    const auto batch = static_cast<Eigen::Index>(sequences.size());
    std::vector<RealMatrix> out(steps, RealMatrix(kFeatureWidth, batch));
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto &seq = sequences[static_cast<std::size_t>(b)];
        if (seq.size() != steps)
            throw std::invalid_argument("batch_inputs: sequences differ in length");
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t k = 0; k < kFeatureWidth; ++k)
                out[t](static_cast<Eigen::Index>(k), b) = seq[t].values[k];
    }
    return out;
}

RealVector gru_forward(const QssrNet &net, std::span<const FeatureVector> features)
{
    if (features.empty())
        return RealVector::Zero(static_cast<Eigen::Index>(net.shape().hidden_width));
    for (const FeatureVector &f : features)
        for (double v : f.values)
            if (!std::isfinite(v))
                throw std::invalid_argument("gru_forward: non-finite feature");
    const std::vector<std::vector<FeatureVector>> one{std::vector<FeatureVector>(features.begin(), features.end())};
    return net.final_hidden(batch_inputs(one)).col(0);
}

double predict_raw(const QssrNet &net, std::span<const LayerMeasurement> log)
{
    const std::vector<std::vector<FeatureVector>> one{build_features(log)};
    return net.forward(batch_inputs(one))(0);
}

NormalizedAngle predict_angle(const QssrNet &net, std::span<const LayerMeasurement> log)
{
    return NormalizedAngle(predict_raw(net, log));
}

double NetEstimator::estimate(std::span<const LayerMeasurement> log) const
{
    return predict_raw(*net_, log);
}

PowerLoss power_loss(double tx_angle, double rx_angle, const CMatrix &channel)
{
    const auto n_tx = static_cast<std::size_t>(channel.cols());
    const auto n_rx = static_cast<std::size_t>(channel.rows());
    const CVector f = steering(n_tx, tx_angle);
    const CVector w = steering(n_rx, rx_angle);
    CVector df = f;
    for (Eigen::Index n = 0; n < df.size(); ++n)
        df[n] *= Complex(0.0, kPi * static_cast<double>(n));
    CVector dw = w;
    for (Eigen::Index n = 0; n < dw.size(); ++n)
        dw[n] *= Complex(0.0, kPi * static_cast<double>(n));
    const CVector hf = channel * f;
    const Complex g = w.dot(hf);
    PowerLoss out;
    out.value = -std::norm(g);
    out.d_tx = -2.0 * std::real(std::conj(g) * w.dot(channel * df));
    out.d_rx = -2.0 * std::real(std::conj(g) * dw.dot(hf));
    return out;
}

} // namespace qssr
