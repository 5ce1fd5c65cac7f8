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

#include "qssr/search.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qssr {

std::size_t argmax_lowest(std::span<const double> values)
{
    if (values.empty())
        throw std::invalid_argument("argmax_lowest: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best])
            best = i;
    return best + 1;
}

MeasurementLink::MeasurementLink(const CMatrix &channel, double noise_std, Rng &rng)
    : channel_(&channel), noise_std_(noise_std), rng_(&rng)
{
    if (noise_std < 0.0)
        throw std::invalid_argument("MeasurementLink: noise_std must be >= 0");
}

Measurement MeasurementLink::probe(const CVector &tx_vector, const CVector &rx_vector)
{
    ++count_;
    return measure(*channel_, tx_vector, rx_vector, noise_std_, *rng_);
}

Measurement MeasurementLink::observe(Complex noiseless, const CVector &rx_vector)
{
    ++count_;
    Complex y = noiseless;
    if (noise_std_ > 0.0) {
        const double variance = noise_std_ * noise_std_;
        Complex wn(0.0, 0.0);
        for (Eigen::Index m = 0; m < rx_vector.size(); ++m)
            wn += std::conj(rx_vector[m]) * rng_->complex_normal(variance);
        y += wn;
    }
    return {y, std::norm(y)};
}

CVector quasi_omni(std::size_t n_rx)
{
    CVector w = CVector::Zero(static_cast<Eigen::Index>(n_rx));
    w[0] = 1.0 / std::sqrt(static_cast<double>(n_rx));
    return w;
}

bool is_power_of_two(std::size_t n)
{
    return n >= 1 && (n & (n - 1)) == 0;
}

ScanShape quaternary_shape(std::size_t n_antennas)
{
    if (n_antennas < 2 || !is_power_of_two(n_antennas))
        throw std::invalid_argument("array size " + std::to_string(n_antennas) +
                                    " is not a power of two >= 2");
    ScanShape shape;
    std::size_t m = 1;
    while (m * 4 <= n_antennas) {
        m *= 4;
        ++shape.quaternary_layers;
    }
    shape.binary_tail = m != n_antennas;
    return shape;
}

namespace {

struct Prober {
    Side side;
    std::size_t n;
    MeasurementLink &link;
    const BeamShaper &shaper;
    const CVector &counterpart;

    // Measures the listed codewords of F_M and appends the layer to `scan`.
    void layer(SideScan &scan, std::size_t layer_size, std::size_t first, std::size_t count)
    {
        LayerMeasurement lm;
        lm.layer_index = scan.layers.size() + 1;
        lm.layer_size = layer_size;
        scan.final_probes.clear();
        for (std::size_t k = 0; k < count; ++k) {
            const Codeword cw = make_codeword(layer_size, first + k, n);
            CVector applied = shaper.shape(side, cw.vector, cw.pointing.value());
            const Measurement m = side == Side::tx ? link.probe(applied, counterpart)
                                                   : link.probe(counterpart, applied);
            lm.codeword_indices.push_back(cw.index);
            lm.pointings.push_back(cw.pointing);
            lm.powers.push_back(m.power);
            scan.final_probes.push_back(std::move(applied));
        }
        lm.chosen_index = argmax_lowest(lm.powers);
        scan.layers.push_back(std::move(lm));
    }
};

void check_dims(const CMatrix &channel)
{
    const auto n_rx = static_cast<std::size_t>(channel.rows());
    const auto n_tx = static_cast<std::size_t>(channel.cols());
    if (!is_power_of_two(n_tx) || !is_power_of_two(n_rx) || n_tx < 2 || n_rx < 2)
        throw std::invalid_argument("hierarchical search needs power-of-two array sizes >= 2, got N_t=" +
                                    std::to_string(n_tx) + ", N_r=" + std::to_string(n_rx));
}

std::size_t chosen_codeword(const LayerMeasurement &layer)
{
    return layer.codeword_indices[layer.chosen_index - 1];
}

} // namespace

SideScan quaternary_scan(Side side, std::size_t n_antennas, MeasurementLink &link,
                         const BeamShaper &shaper, const CVector &counterpart)
{
    const ScanShape shape = quaternary_shape(n_antennas);
    Prober prober{side, n_antennas, link, shaper, counterpart};
    SideScan scan;
    scan.counterpart = counterpart;
    std::size_t group = 1; // i in the algorithm: absolute index of the selected parent
    std::size_t m = 1;
    for (std::size_t l = 0; l < shape.quaternary_layers; ++l) {
        m *= 4;
        prober.layer(scan, m, 4 * group - 3, 4);
        group = chosen_codeword(scan.layers.back());
    }
    if (shape.binary_tail) {
        m *= 2;
        prober.layer(scan, m, 2 * group - 1, 2);
    }
    return scan;
}

SideScan binary_scan(Side side, std::size_t n_antennas, MeasurementLink &link,
                     const BeamShaper &shaper, const CVector &counterpart)
{
    if (n_antennas < 2 || !is_power_of_two(n_antennas))
        throw std::invalid_argument("binary_scan: array size must be a power of two >= 2");
    Prober prober{side, n_antennas, link, shaper, counterpart};
    SideScan scan;
    scan.counterpart = counterpart;
    std::size_t node = 1;
    for (std::size_t m = 2; m <= n_antennas; m *= 2) {
        prober.layer(scan, m, 2 * node - 1, 2);
        node = chosen_codeword(scan.layers.back());
    }
    return scan;
}

RatioEstimate ratio_estimate(const LayerMeasurement &layer)
{
    const std::size_t beams = layer.beam_count();
    if (beams < 2 || layer.pointings.size() != beams || layer.codeword_indices.size() != beams)
        throw std::invalid_argument("ratio_estimate: layer needs at least two probed beams");
    RatioEstimate est;
    est.anchor = argmax_lowest(layer.powers);
    const auto power = [&](std::size_t i) { return layer.powers[i - 1]; };
    const bool has_left = est.anchor > 1;
    const bool has_right = est.anchor < beams;
    if (has_left && has_right)
        est.auxiliary = power(est.anchor + 1) > power(est.anchor - 1) ? est.anchor + 1 : est.anchor - 1;
    else
        est.auxiliary = has_left ? est.anchor - 1 : est.anchor + 1;
    est.boundary_auxiliary = beams == 4 && !(has_left && has_right);

    const std::size_t left = std::min(est.anchor, est.auxiliary);
    const std::size_t right = left + 1;
    const double p_left = power(left);
    const double p_right = power(right);
    est.degenerate = p_left == 0.0 && p_right == 0.0;
    if (est.degenerate) {
        est.angle = layer.pointings[est.anchor - 1];
        return est;
    }
    const GainRatio ratio = p_right > 0.0 ? GainRatio::finite(p_left / p_right) : GainRatio::infinite();
    const std::size_t p = layer.codeword_indices[left - 1];
    est.angle = invert_ratio(layer.layer_size, p, p + 1, ratio);
    return est;
}

double RatioInversionEstimator::estimate(std::span<const LayerMeasurement> log) const
{
    if (log.empty())
        throw std::invalid_argument("RatioInversionEstimator: empty scan log");
    return ratio_estimate(log.back()).angle.value();
}

std::string_view strategy_name(Strategy s)
{
    switch (s) {
    case Strategy::exhaustive: return "exhaustive";
    case Strategy::binary: return "binary";
    case Strategy::qssr: return "qssr";
    case Strategy::qssr_net: return "qssr_net";
    case Strategy::oracle: return "oracle";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name)
{
    for (Strategy s : {Strategy::exhaustive, Strategy::binary, Strategy::qssr, Strategy::qssr_net,
                       Strategy::oracle})
        if (strategy_name(s) == name)
            return s;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

AlignmentResult exhaustive_search(const CMatrix &channel, double noise_std, Rng &rng,
                                  const BeamShaper &shaper)
{
    const auto n_rx = static_cast<std::size_t>(channel.rows());
    const auto n_tx = static_cast<std::size_t>(channel.cols());
    const Codebook tx_book = dft_codebook(n_tx);
    const Codebook rx_book = dft_codebook(n_rx);
    CMatrix f(channel.cols(), static_cast<Eigen::Index>(n_tx));
    CMatrix w(channel.rows(), static_cast<Eigen::Index>(n_rx));
    for (std::size_t p = 1; p <= n_tx; ++p)
        f.col(static_cast<Eigen::Index>(p - 1)) = shaper.shape(Side::tx, tx_book[p].vector, tx_book[p].pointing.value());
    for (std::size_t q = 1; q <= n_rx; ++q)
        w.col(static_cast<Eigen::Index>(q - 1)) = shaper.shape(Side::rx, rx_book[q].vector, rx_book[q].pointing.value());
    const CMatrix noiseless = w.adjoint() * channel * f; // n_rx x n_tx

    MeasurementLink link(channel, noise_std, rng);
    double best = -1.0;
    Eigen::Index best_t = 0, best_r = 0;
    for (Eigen::Index t = 0; t < f.cols(); ++t) {
        for (Eigen::Index r = 0; r < w.cols(); ++r) {
            const double power = link.observe(noiseless(r, t), w.col(r)).power;
            if (power > best) {
                best = power;
                best_t = t;
                best_r = r;
            }
        }
    }
    AlignmentResult result;
    result.tx_angle = tx_book[static_cast<std::size_t>(best_t) + 1].pointing;
    result.rx_angle = rx_book[static_cast<std::size_t>(best_r) + 1].pointing;
    result.tx_vector = f.col(best_t);
    result.rx_vector = w.col(best_r);
    result.measurement_count = link.count();
    return result;
}

AlignmentResult binary_search(const CMatrix &channel, double noise_std, Rng &rng,
                              const BeamShaper &shaper)
{
    check_dims(channel);
    const auto n_rx = static_cast<std::size_t>(channel.rows());
    const auto n_tx = static_cast<std::size_t>(channel.cols());
    MeasurementLink link(channel, noise_std, rng);
    AlignmentResult result;

    const CVector omni = shaper.shape(Side::rx, quasi_omni(n_rx), 0.0);
    result.tx_scan = binary_scan(Side::tx, n_tx, link, shaper, omni);
    const LayerMeasurement &tx_last = result.tx_scan.layers.back();
    result.tx_angle = tx_last.pointings[tx_last.chosen_index - 1];
    result.tx_vector = result.tx_scan.final_probes[tx_last.chosen_index - 1];

    result.rx_scan = binary_scan(Side::rx, n_rx, link, shaper, result.tx_vector);
    const LayerMeasurement &rx_last = result.rx_scan.layers.back();
    result.rx_angle = rx_last.pointings[rx_last.chosen_index - 1];
    result.rx_vector = result.rx_scan.final_probes[rx_last.chosen_index - 1];
    result.measurement_count = link.count();
    return result;
}

AlignmentResult qssr_search(const CMatrix &channel, double noise_std, Rng &rng,
                            const AngleEstimator &tx_estimator, const AngleEstimator &rx_estimator,
                            const BeamShaper &shaper)
{
    check_dims(channel);
    const auto n_rx = static_cast<std::size_t>(channel.rows());
    const auto n_tx = static_cast<std::size_t>(channel.cols());
    MeasurementLink link(channel, noise_std, rng);
    AlignmentResult result;

    const CVector omni = shaper.shape(Side::rx, quasi_omni(n_rx), 0.0);
    result.tx_scan = quaternary_scan(Side::tx, n_tx, link, shaper, omni);
    result.tx_angle = NormalizedAngle(tx_estimator.estimate(result.tx_scan.layers));
    result.tx_vector = shaper.shape(Side::tx, steering(n_tx, result.tx_angle), result.tx_angle.value());

    result.rx_scan = quaternary_scan(Side::rx, n_rx, link, shaper, result.tx_vector);
    result.rx_angle = NormalizedAngle(rx_estimator.estimate(result.rx_scan.layers));
    result.rx_vector = shaper.shape(Side::rx, steering(n_rx, result.rx_angle), result.rx_angle.value());
    result.measurement_count = link.count();

    const RatioEstimate tx_est = ratio_estimate(result.tx_scan.layers.back());
    const RatioEstimate rx_est = ratio_estimate(result.rx_scan.layers.back());
    if (tx_est.boundary_auxiliary)
        result.flags |= kFlagBoundaryTx;
    if (rx_est.boundary_auxiliary)
        result.flags |= kFlagBoundaryRx;
    if (tx_est.degenerate || rx_est.degenerate)
        result.flags |= kFlagDegenerate;
    return result;
}

AlignmentResult qssr_search(const CMatrix &channel, double noise_std, Rng &rng, const BeamShaper &shaper)
{
    const RatioInversionEstimator estimator;
    return qssr_search(channel, noise_std, rng, estimator, estimator, shaper);
}

AlignmentResult oracle_alignment(const PathChannel &channel)
{
    if (!channel.has_paths())
        throw std::invalid_argument("oracle_alignment: channel has no path metadata");
    const PathParams &dominant = channel.dominant();
    AlignmentResult result;
    result.tx_angle = dominant.aod;
    result.rx_angle = dominant.aoa;
    result.tx_vector = steering(channel.n_tx, dominant.aod);
    result.rx_vector = steering(channel.n_rx, dominant.aoa);
    return result;
}

double evaluate(const AlignmentResult &result, const CMatrix &channel)
{
    if (result.tx_vector.size() != channel.cols() || result.rx_vector.size() != channel.rows())
        throw std::invalid_argument("evaluate: beamformers do not match channel dimensions");
    return std::norm(result.rx_vector.dot(channel * result.tx_vector));
}

std::size_t exhaustive_measurements(std::size_t n_tx, std::size_t n_rx)
{
    return n_tx * n_rx;
}

std::size_t binary_measurements(std::size_t n_tx, std::size_t n_rx)
{
    const auto lg = [](std::size_t n) {
        std::size_t l = 0;
        while ((std::size_t{1} << l) < n)
            ++l;
        return l;
    };
    return 2 * lg(n_rx) + 2 * lg(n_tx);
}

std::size_t qssr_measurements(std::size_t n_tx, std::size_t n_rx)
{
    return quaternary_shape(n_rx).measurements() + quaternary_shape(n_tx).measurements();
}

} // namespace qssr
