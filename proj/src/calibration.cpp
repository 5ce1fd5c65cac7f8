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

#include "qssr/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace qssr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kMonitorDomain = 0xCA11B;
constexpr std::uint64_t kOnlineDomain = 0xCA11C;

const Eigen::VectorXd &position_of(const CalibrationState &s, Side side)
{
    return side == Side::tx ? s.tx_position : s.rx_position;
}

const Eigen::VectorXd &phase_of(const CalibrationState &s, Side side)
{
    return side == Side::tx ? s.tx_phase : s.rx_phase;
}

std::vector<double> normalized(std::span<const double> p, const char *what)
{
    if (p.empty())
        throw std::invalid_argument(std::string("calibration: empty ") + what + " power vector");
    const double peak = *std::max_element(p.begin(), p.end());
    if (!(peak > 0.0))
        throw DegenerateMeasurementError(std::string("calibration: all-zero ") + what + " power vector");
    std::vector<double> out(p.begin(), p.end());
    for (double &v : out)
        v /= peak;
    return out;
}

// Loss of one side and its gradient in the per-element phases of the two
// virtual-channel factors u (transmit) and v (receive).
struct SideTerm {
    double loss = 0;
    Eigen::VectorXd d_tx; // d loss / d psi_n
    Eigen::VectorXd d_rx; // d loss / d chi_n
};

SideTerm side_term(std::span<const double> measured, const CVector &u, const CVector &v,
                   const std::vector<const CVector *> &w, const std::vector<const CVector *> &f)
{
    const std::size_t beams = w.size();
    const std::vector<double> target = normalized(measured, "measured");
    if (target.size() != beams)
        throw std::invalid_argument("calibration: measured powers do not match the probe count");

    std::vector<Complex> A(beams), B(beams);
    std::vector<double> p(beams);
    for (std::size_t i = 0; i < beams; ++i) {
        A[i] = w[i]->dot(v);
        B[i] = u.dot(*f[i]);
        p[i] = std::norm(A[i]) * std::norm(B[i]);
    }
    const std::size_t m = argmax_lowest(p) - 1;
    const double pm = p[m];
    if (!(pm > 0.0))
        throw DegenerateMeasurementError("calibration: all-zero synthesized power vector");

    SideTerm out;
    std::vector<double> dn(beams); // d loss / d normalized_i
    for (std::size_t i = 0; i < beams; ++i) {
        const double e = target[i] - p[i] / pm;
        out.loss += e * e;
        dn[i] = -2.0 * e;
    }
    // d loss / d p_i, with the argmax held fixed
    std::vector<double> dp(beams);
    double dpm = 0;
    for (std::size_t i = 0; i < beams; ++i) {
        dp[i] = dn[i] / pm;
        dpm -= dn[i] * p[i] / (pm * pm);
    }
    dp[m] += dpm;

    out.d_tx = Eigen::VectorXd::Zero(u.size());
    out.d_rx = Eigen::VectorXd::Zero(v.size());
    for (std::size_t i = 0; i < beams; ++i) {
        if (dp[i] == 0.0)
            continue;
        const double a2 = std::norm(A[i]);
        const double b2 = std::norm(B[i]);
        for (Eigen::Index n = 0; n < u.size(); ++n)
            out.d_tx[n] += dp[i] * a2 * 2.0 * std::imag(std::conj(B[i]) * std::conj(u[n]) * (*f[i])[n]);
        for (Eigen::Index n = 0; n < v.size(); ++n)
            out.d_rx[n] -= dp[i] * b2 * 2.0 * std::imag(std::conj(A[i]) * std::conj((*w[i])[n]) * v[n]);
    }
    return out;
}

Eigen::VectorXd pack(const CalibrationState &s)
{
    Eigen::VectorXd x(2 * (s.tx_phase.size() + s.rx_phase.size()));
    x << s.tx_position, s.tx_phase, s.rx_position, s.rx_phase;
    return x;
}

void unpack(const Eigen::VectorXd &x, CalibrationState &s)
{
    const Eigen::Index nt = s.tx_phase.size();
    const Eigen::Index nr = s.rx_phase.size();
    s.tx_position = x.segment(0, nt);
    s.tx_phase = x.segment(nt, nt);
    s.rx_position = x.segment(2 * nt, nr);
    s.rx_phase = x.segment(2 * nt + nr, nr);
}

} // namespace

CalibrationState CalibrationState::zero(std::size_t n_tx, std::size_t n_rx)
{
    CalibrationState s;
    s.tx_position = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_tx));
    s.tx_phase = s.tx_position;
    s.rx_position = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_rx));
    s.rx_phase = s.rx_position;
    return s;
}

void CalibrationState::pin_gauge()
{
    for (Eigen::VectorXd *v : {&tx_position, &tx_phase, &rx_position, &rx_phase})
        if (v->size() > 0)
            v->array() -= (*v)[0];
}

void CalibrationState::validate() const
{
    if (tx_phase.size() == 0 || rx_phase.size() == 0)
        throw std::invalid_argument("CalibrationState: empty estimate vectors");
    if (tx_position.size() != tx_phase.size() || rx_position.size() != rx_phase.size())
        throw std::invalid_argument("CalibrationState: position and phase estimates differ in length");
    if (!tx_position.allFinite() || !tx_phase.allFinite() || !rx_position.allFinite() || !rx_phase.allFinite())
        throw std::invalid_argument("CalibrationState: non-finite estimate");
}

CVector compensation_diagonal(const Eigen::VectorXd &position, const Eigen::VectorXd &phase, double angle)
{
    if (position.size() != phase.size())
        throw std::invalid_argument("compensation_diagonal: length mismatch");
    CVector d(phase.size());
    for (Eigen::Index n = 0; n < d.size(); ++n)
        d[n] = std::polar(1.0, phase[n] + kTwoPi * position[n] * angle);
    return d;
}

CVector compensate_codeword(const CalibrationState &state, Side side, const CVector &codeword, double pointing)
{
    const Eigen::VectorXd &pos = position_of(state, side);
    if (codeword.size() != pos.size())
        throw std::invalid_argument("compensate_codeword: codeword length does not match the array");
    return compensation_diagonal(pos, phase_of(state, side), pointing).cwiseProduct(codeword);
}

CMatrix reconstruct_virtual_channel(const CalibrationState &state, double theta_hat, double phi_hat)
{
    const CVector v = compensation_diagonal(state.rx_position, state.rx_phase, theta_hat)
                          .cwiseProduct(steering(state.n_rx(), theta_hat));
    const CVector u = compensation_diagonal(state.tx_position, state.tx_phase, phi_hat)
                          .cwiseProduct(steering(state.n_tx(), phi_hat));
    return v * u.adjoint();
}

SynthesizedPowers synthesize_powers(const CalibrationState &state, double theta_hat, double phi_hat,
                                    const FinalLayerProbes &probes)
{
    const CMatrix H = reconstruct_virtual_channel(state, theta_hat, phi_hat);
    SynthesizedPowers out;
    for (const CVector &f : probes.tx_probes)
        out.tx.push_back(std::norm(probes.tx_counterpart.dot(H * f)));
    const CVector hf = H * probes.rx_counterpart;
    for (const CVector &w : probes.rx_probes)
        out.rx.push_back(std::norm(w.dot(hf)));
    return out;
}

double calibration_loss(std::span<const double> measured_tx, std::span<const double> measured_rx,
                        std::span<const double> synthesized_tx, std::span<const double> synthesized_rx)
{
    if (measured_tx.size() != synthesized_tx.size() || measured_rx.size() != synthesized_rx.size())
        throw std::invalid_argument("calibration_loss: measured and synthesized lengths differ");
    double loss = 0;
    const auto side = [&](std::span<const double> m, std::span<const double> s) {
        const std::vector<double> a = normalized(m, "measured");
        const std::vector<double> b = normalized(s, "synthesized");
        for (std::size_t i = 0; i < a.size(); ++i)
            loss += (a[i] - b[i]) * (a[i] - b[i]);
    };
    side(measured_tx, synthesized_tx);
    side(measured_rx, synthesized_rx);
    return loss;
}

CalibrationSample calibration_sample(const AlignmentResult &alignment)
{
    if (alignment.tx_scan.layers.empty() || alignment.rx_scan.layers.empty())
        throw std::invalid_argument("calibration_sample: alignment has no hierarchical scan");
    CalibrationSample s;
    s.tx_angle = alignment.tx_angle.value();
    s.rx_angle = alignment.rx_angle.value();
    s.probes.tx_probes = alignment.tx_scan.final_probes;
    s.probes.tx_counterpart = alignment.tx_scan.counterpart;
    s.probes.rx_probes = alignment.rx_scan.final_probes;
    s.probes.rx_counterpart = alignment.rx_scan.counterpart;
    s.measured_tx = alignment.tx_scan.layers.back().powers;
    s.measured_rx = alignment.rx_scan.layers.back().powers;
    return s;
}

CalibrationGradient calibration_gradient(const CalibrationState &state, const CalibrationSample &sample)
{
    const CVector u = compensation_diagonal(state.tx_position, state.tx_phase, sample.tx_angle)
                          .cwiseProduct(steering(state.n_tx(), sample.tx_angle));
    const CVector v = compensation_diagonal(state.rx_position, state.rx_phase, sample.rx_angle)
                          .cwiseProduct(steering(state.n_rx(), sample.rx_angle));
    const FinalLayerProbes &pr = sample.probes;

    std::vector<const CVector *> w, f;
    for (const CVector &probe : pr.tx_probes) {
        w.push_back(&pr.tx_counterpart);
        f.push_back(&probe);
    }
    const SideTerm t = side_term(sample.measured_tx, u, v, w, f);
    w.clear();
    f.clear();
    for (const CVector &probe : pr.rx_probes) {
        w.push_back(&probe);
        f.push_back(&pr.rx_counterpart);
    }
    const SideTerm r = side_term(sample.measured_rx, u, v, w, f);

    CalibrationGradient g;
    g.loss = t.loss + r.loss;
    const Eigen::VectorXd d_psi = t.d_tx + r.d_tx;
    const Eigen::VectorXd d_chi = t.d_rx + r.d_rx;
    g.tx_phase = d_psi;
    g.tx_position = kTwoPi * sample.tx_angle * d_psi;
    g.rx_phase = d_chi;
    g.rx_position = kTwoPi * sample.rx_angle * d_chi;
    return g;
}

double sample_loss(const CalibrationState &state, const CalibrationSample &sample)
{
    const SynthesizedPowers s = synthesize_powers(state, sample.rx_angle, sample.tx_angle, sample.probes);
    return calibration_loss(sample.measured_tx, sample.measured_rx, s.tx, s.rx);
}

void CalibrationRunConfig::validate() const
{
    if (!(step_size > 0.0))
        throw std::invalid_argument("CalibrationRunConfig.step_size: must be positive");
    if (epochs < 1)
        throw std::invalid_argument("CalibrationRunConfig.epochs: must be >= 1");
    if (alignments_per_epoch < 1)
        throw std::invalid_argument("CalibrationRunConfig.alignments_per_epoch: must be >= 1");
    if (period < 1)
        throw std::invalid_argument("CalibrationRunConfig.period: must be >= 1");
    if (!std::isfinite(snr_db))
        throw std::invalid_argument("CalibrationRunConfig.snr_db: must be finite");
}

Aligner qssr_aligner()
{
    return [](const CMatrix &channel, double noise_std, Rng &rng, const BeamShaper &shaper) {
        return qssr_search(channel, noise_std, rng, shaper);
    };
}

Aligner net_aligner(const QssrNet &tx_net, const QssrNet &rx_net)
{
    return [&tx_net, &rx_net](const CMatrix &channel, double noise_std, Rng &rng, const BeamShaper &shaper) {
        const NetEstimator tx(tx_net);
        const NetEstimator rx(rx_net);
        return qssr_search(channel, noise_std, rng, tx, rx, shaper);
    };
}

CalibrationEpoch score_calibration(const CalibrationState &state, const Aligner &aligner,
                                   const ImpairedChannelStream &stream, const CalibrationRunConfig &config)
{
    const CompensationShaper shaper(state);
    const double sigma = noise_std_for_snr_db(config.snr_db);
    CalibrationEpoch out;
    out.epoch = state.epoch;
    std::size_t scored = 0;
    for (std::size_t k = 0; k < config.monitor_size; ++k) {
        const CMatrix channel = stream(k);
        Rng rng(config.seed, stream_key(kMonitorDomain, k));
        const AlignmentResult a = aligner(channel, sigma, rng, shaper);
        out.power += evaluate(a, channel);
        try {
            out.loss += sample_loss(state, calibration_sample(a));
            ++scored;
        } catch (const DegenerateMeasurementError &) {
        }
    }
    if (config.monitor_size > 0)
        out.power /= static_cast<double>(config.monitor_size);
    if (scored > 0)
        out.loss /= static_cast<double>(scored);
    return out;
}

CalibrationResult calibrate(CalibrationState state, const Aligner &aligner, const ImpairedChannelStream &stream,
                            const CalibrationRunConfig &config,
                            const std::function<void(const CalibrationEpoch &)> &on_epoch)
{
    config.validate();
    state.validate();
    state.pin_gauge();
    const double sigma = noise_std_for_snr_db(config.snr_db);
    AdamState adam;
    CalibrationResult result;
    const std::size_t first = state.epoch;
    for (std::size_t epoch = first; epoch < first + config.epochs; ++epoch) {
        state.epoch = epoch;
        const CalibrationEpoch row = score_calibration(state, aligner, stream, config);
        result.trace.push_back(row);
        if (on_epoch)
            on_epoch(row);

        Eigen::VectorXd grad = Eigen::VectorXd::Zero(pack(state).size());
        std::size_t pending = 0;
        for (std::size_t k = 0; k < config.alignments_per_epoch; ++k) {
            const std::uint64_t index = config.monitor_size + epoch * config.alignments_per_epoch + k;
            const CMatrix channel = stream(index);
            Rng rng(config.seed, stream_key(kOnlineDomain, epoch, k));
            const CompensationShaper shaper(state);
            const AlignmentResult a = aligner(channel, sigma, rng, shaper);
            CalibrationGradient g;
            try {
                g = calibration_gradient(state, calibration_sample(a));
            } catch (const DegenerateMeasurementError &) {
                continue;
            }
            if (!std::isfinite(g.loss))
                throw std::runtime_error("calibrate: non-finite loss at epoch " + std::to_string(epoch));
            Eigen::VectorXd gi(grad.size());
            gi << g.tx_position, g.tx_phase, g.rx_position, g.rx_phase;
            grad += gi;
            if (++pending == config.period) {
                Eigen::VectorXd x = pack(state);
                adam_step(x, grad / static_cast<double>(pending), adam, config.step_size);
                unpack(x, state);
                state.pin_gauge();
                grad.setZero();
                pending = 0;
            }
        }
    }
    state.epoch = first + config.epochs;
    result.state = std::move(state);
    return result;
}

double trailing_relative_change(std::span<const double> trace, std::size_t window)
{
    if (window < 2 || trace.size() < window)
        throw std::invalid_argument("trailing_relative_change: trace shorter than the window");
    const std::size_t half = window / 2;
    const auto tail = trace.subspan(trace.size() - window);
    double early = 0, late = 0;
    for (std::size_t i = 0; i < half; ++i)
        early += tail[i];
    for (std::size_t i = half; i < window; ++i)
        late += tail[i];
    const double total = (early + late) / static_cast<double>(window);
    early /= static_cast<double>(half);
    late /= static_cast<double>(window - half);
    if (total == 0.0)
        return early == late ? 0.0 : INFINITY;
    return std::abs(late - early) / std::abs(total);
}

void save_calibration(const std::filesystem::path &path, const CalibrationState &state)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open calibration state for writing: " + path.string());
    out << std::setprecision(17) << "QSSRCAL 1\n" << "epoch " << state.epoch << '\n';
    const auto row = [&](const char *name, const Eigen::VectorXd &v) {
        out << name << ' ' << v.size();
        for (Eigen::Index i = 0; i < v.size(); ++i)
            out << ' ' << v[i];
        out << '\n';
    };
    row("tx_position", state.tx_position);
    row("tx_phase", state.tx_phase);
    row("rx_position", state.rx_position);
    row("rx_phase", state.rx_phase);
    out.flush();
    if (!out)
        throw std::runtime_error("failed writing calibration state: " + path.string());
}

CalibrationState load_calibration(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open calibration state: " + path.string());
    const auto bad = [&](const std::string &why) {
        return std::runtime_error("calibration state " + path.string() + ": " + why);
    };
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "QSSRCAL" || version != 1)
        throw bad("missing QSSRCAL 1 header");
    CalibrationState s;
    std::string key;
    if (!(in >> key >> s.epoch) || key != "epoch")
        throw bad("missing epoch");
    for (auto [name, target] : {std::pair{"tx_position", &s.tx_position}, std::pair{"tx_phase", &s.tx_phase},
                                std::pair{"rx_position", &s.rx_position}, std::pair{"rx_phase", &s.rx_phase}}) {
        Eigen::Index n = 0;
        if (!(in >> key >> n) || key != name || n <= 0)
            throw bad(std::string("missing ") + name);
        target->resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            std::string token;
            char *end = nullptr;
            if (!(in >> token))
                throw bad(std::string("truncated ") + name);
            (*target)[i] = std::strtod(token.c_str(), &end);
            if (end != token.c_str() + token.size())
                throw bad(std::string("bad value in ") + name);
        }
    }
    try {
        s.validate();
    } catch (const std::invalid_argument &e) {
        throw bad(e.what());
    }
    return s;
}

} // namespace qssr
