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

#ifndef QSSR_CALIBRATION_HPP
#define QSSR_CALIBRATION_HPP

#include "qssr/arraymath.hpp"
#include "qssr/neural.hpp"
#include "qssr/optim.hpp"
#include "qssr/search.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace qssr {

// Estimated per-element position (wavelengths) and phase (rad) errors of both
// arrays. Element 1 of each vector is held at zero.
struct CalibrationState {
    Eigen::VectorXd tx_position;
    Eigen::VectorXd tx_phase;
    Eigen::VectorXd rx_position;
    Eigen::VectorXd rx_phase;
    std::size_t epoch = 0;

    static CalibrationState zero(std::size_t n_tx, std::size_t n_rx);
    std::size_t n_tx() const { return static_cast<std::size_t>(tx_phase.size()); }
    std::size_t n_rx() const { return static_cast<std::size_t>(rx_phase.size()); }
    void pin_gauge();
    void validate() const;
};

// exp(j (phase_n + 2 pi position_n angle)) for every element; the estimated
// D(angle) Phi as one diagonal.
CVector compensation_diagonal(const Eigen::VectorXd &position, const Eigen::VectorXd &phase, double angle);

// Phi_hat D_hat(pointing) applied to an ideal beamformer.
CVector compensate_codeword(const CalibrationState &state, Side side, const CVector &codeword, double pointing);

class CompensationShaper final : public BeamShaper {
public:
    explicit CompensationShaper(const CalibrationState &state) : state_(&state) {}
    CVector shape(Side side, const CVector &ideal, double pointing) const override
    {
        return compensate_codeword(*state_, side, ideal, pointing);
    }

private:
    const CalibrationState *state_;
};

// D_r(theta) Phi_r a_r(theta) a_t^H(phi) Phi_t^H D_t^H(phi) with the estimates.
CMatrix reconstruct_virtual_channel(const CalibrationState &state, double theta_hat, double phi_hat);

// Vectors applied in the final layer of each side's live scan.
struct FinalLayerProbes {
    std::vector<CVector> tx_probes; // scanned transmit beams
    CVector tx_counterpart;         // receive vector held during the transmit scan
    std::vector<CVector> rx_probes; // scanned receive beams
    CVector rx_counterpart;         // transmit vector held during the receive scan
};

struct SynthesizedPowers {
    std::vector<double> tx;
    std::vector<double> rx;
};

// |w^H H_hat f|^2 for every final-layer probe of both sides.
SynthesizedPowers synthesize_powers(const CalibrationState &state, double theta_hat, double phi_hat,
                                    const FinalLayerProbes &probes);

class DegenerateMeasurementError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Squared distance between max-normalized measured and synthesized powers, summed over both sides.
double calibration_loss(std::span<const double> measured_tx, std::span<const double> measured_rx,
                        std::span<const double> synthesized_tx, std::span<const double> synthesized_rx);

// Everything one alignment contributes to the calibration objective.
struct CalibrationSample {
    double tx_angle = 0;
    double rx_angle = 0;
    FinalLayerProbes probes;
    std::vector<double> measured_tx;
    std::vector<double> measured_rx;
};
CalibrationSample calibration_sample(const AlignmentResult &alignment);

struct CalibrationGradient {
    double loss = 0;
    Eigen::VectorXd tx_position;
    Eigen::VectorXd tx_phase;
    Eigen::VectorXd rx_position;
    Eigen::VectorXd rx_phase;
};
// Loss of one sample and its gradient in the four estimate vectors, with the
// applied probe vectors held fixed.
CalibrationGradient calibration_gradient(const CalibrationState &state, const CalibrationSample &sample);
double sample_loss(const CalibrationState &state, const CalibrationSample &sample);

struct CalibrationRunConfig {
    double step_size = 1e-2;
    std::size_t epochs = 300;
    std::size_t alignments_per_epoch = 20;
    std::size_t period = 1;          // alignments per update
    double snr_db = 30.0;
    std::size_t monitor_size = 200;  // fixed channels scored at the start of every epoch
    std::uint64_t seed = 1;

    void validate() const;
};

// Runs one alignment through a channel with the given beam shaping.
using Aligner = std::function<AlignmentResult(const CMatrix &channel, double noise_std, Rng &rng,
                                              const BeamShaper &shaper)>;
Aligner qssr_aligner();
Aligner net_aligner(const QssrNet &tx_net, const QssrNet &rx_net);

// Impaired channel number `index` of the deployment.
using ImpairedChannelStream = std::function<CMatrix(std::uint64_t index)>;

struct CalibrationEpoch {
    std::size_t epoch = 0;
    double loss = 0;         // mean over the monitor set
    double power = 0;        // mean linear |w^H H f|^2 over the monitor set
};

struct CalibrationResult {
    CalibrationState state;
    std::vector<CalibrationEpoch> trace; // row e is scored before the updates of epoch e
};

// Mean loss and achieved power of `state` on the fixed monitor set.
CalibrationEpoch score_calibration(const CalibrationState &state, const Aligner &aligner,
                                   const ImpairedChannelStream &stream, const CalibrationRunConfig &config);

CalibrationResult calibrate(CalibrationState state, const Aligner &aligner, const ImpairedChannelStream &stream,
                            const CalibrationRunConfig &config,
                            const std::function<void(const CalibrationEpoch &)> &on_epoch = {});

// Relative change of the trace over its last `window` entries:
// |mean(second half) - mean(first half)| / |mean(window)|.
double trailing_relative_change(std::span<const double> trace, std::size_t window);

void save_calibration(const std::filesystem::path &path, const CalibrationState &state);
CalibrationState load_calibration(const std::filesystem::path &path);

} // namespace qssr

#endif
