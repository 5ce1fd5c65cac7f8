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

#ifndef QSSR_SEARCH_HPP
#define QSSR_SEARCH_HPP

#include "qssr/arraymath.hpp"
#include "qssr/channel.hpp"
#include "qssr/rng.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qssr {

enum class Side { tx, rx };

// Maps an ideal beamformer (with its steering direction) to the vector that
// is actually applied to the array. The identity shaper is used unless a
// calibration stage supplies compensation.
class BeamShaper {
public:
    virtual ~BeamShaper() = default;
    virtual CVector shape(Side side, const CVector &ideal, double pointing) const = 0;
};

class IdentityShaper final : public BeamShaper {
public:
    CVector shape(Side, const CVector &ideal, double) const override { return ideal; }
};

// One hierarchical layer of a scan: 4 beams for quaternary layers, 2 for a
// binary layer.
struct LayerMeasurement {
    std::size_t layer_index = 0;                // 1-based
    std::size_t layer_size = 0;                 // M of the codebook F_M
    std::vector<std::size_t> codeword_indices;  // 1-based within F_M
    std::vector<NormalizedAngle> pointings;
    std::vector<double> powers;
    std::size_t chosen_index = 0;               // 1-based within this layer

    std::size_t beam_count() const { return powers.size(); }
};

// argmax with ties resolved toward the lowest index; returns 1-based.
std::size_t argmax_lowest(std::span<const double> values);

// Single-pilot measurements through a fixed effective channel.
class MeasurementLink {
public:
    MeasurementLink(const CMatrix &channel, double noise_std, Rng &rng);

    Measurement probe(const CVector &tx_vector, const CVector &rx_vector);
    // Adds receiver noise to a precomputed noiseless w^H H f.
    Measurement observe(Complex noiseless, const CVector &rx_vector);

    std::size_t count() const { return count_; }
    const CMatrix &channel() const { return *channel_; }
    std::size_t n_tx() const { return static_cast<std::size_t>(channel_->cols()); }
    std::size_t n_rx() const { return static_cast<std::size_t>(channel_->rows()); }

private:
    const CMatrix *channel_;
    double noise_std_;
    Rng *rng_;
    std::size_t count_ = 0;
};

// Receive vector used while the transmitter searches: [1/sqrt(N_r), 0, ..., 0].
CVector quasi_omni(std::size_t n_rx);

// Outcome of one side's hierarchical scan.
struct SideScan {
    std::vector<LayerMeasurement> layers;
    std::vector<CVector> final_probes; // vectors applied in the last layer
    CVector counterpart;               // applied vector on the other side
};

// Quaternary descent F_4, F_16, ...; when N is 2 * 4^k a final binary layer
// of the two children in F_N closes the scan.
SideScan quaternary_scan(Side side, std::size_t n_antennas, MeasurementLink &link,
                         const BeamShaper &shaper, const CVector &counterpart);

// Binary descent F_2, F_4, ..., F_N.
SideScan binary_scan(Side side, std::size_t n_antennas, MeasurementLink &link,
                     const BeamShaper &shaper, const CVector &counterpart);

// Number of layers of each kind a quaternary scan uses for N antennas.
struct ScanShape {
    std::size_t quaternary_layers = 0;
    bool binary_tail = false;
    std::size_t measurements() const { return 4 * quaternary_layers + (binary_tail ? 2 : 0); }
    std::size_t steps() const { return quaternary_layers + (binary_tail ? 1 : 0); }
};
ScanShape quaternary_shape(std::size_t n_antennas);

bool is_power_of_two(std::size_t n);

// Anchor/auxiliary choice and ratio inversion on the last layer of a scan.
struct RatioEstimate {
    NormalizedAngle angle;
    std::size_t anchor = 0;      // 1-based within the layer
    std::size_t auxiliary = 0;   // 1-based within the layer
    bool boundary_auxiliary = false;
    bool degenerate = false;
};
RatioEstimate ratio_estimate(const LayerMeasurement &layer);

// Maps a scan log to an angle estimate (raw; callers wrap).
class AngleEstimator {
public:
    virtual ~AngleEstimator() = default;
    virtual double estimate(std::span<const LayerMeasurement> log) const = 0;
};

class RatioInversionEstimator final : public AngleEstimator {
public:
    double estimate(std::span<const LayerMeasurement> log) const override;
};

enum class Strategy { exhaustive, binary, qssr, qssr_net, oracle };
std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Flag bits carried into trial records.
enum AlignmentFlags : unsigned {
    kFlagNone = 0,
    kFlagBoundaryTx = 1u << 0,
    kFlagBoundaryRx = 1u << 1,
    kFlagDegenerate = 1u << 2,
};

struct AlignmentResult {
    NormalizedAngle tx_angle;
    NormalizedAngle rx_angle;
    CVector tx_vector; // applied during data transmission
    CVector rx_vector;
    SideScan tx_scan;  // empty for exhaustive and oracle
    SideScan rx_scan;
    std::size_t measurement_count = 0;
    unsigned flags = kFlagNone;

    const std::vector<LayerMeasurement> &tx_log() const { return tx_scan.layers; }
    const std::vector<LayerMeasurement> &rx_log() const { return rx_scan.layers; }
};

AlignmentResult exhaustive_search(const CMatrix &channel, double noise_std, Rng &rng,
                                  const BeamShaper &shaper = IdentityShaper());
AlignmentResult binary_search(const CMatrix &channel, double noise_std, Rng &rng,
                              const BeamShaper &shaper = IdentityShaper());
// Algorithm with pluggable final-step estimators; the analytic ratio
// inversion is used when none are given.
AlignmentResult qssr_search(const CMatrix &channel, double noise_std, Rng &rng,
                            const AngleEstimator &tx_estimator, const AngleEstimator &rx_estimator,
                            const BeamShaper &shaper = IdentityShaper());
AlignmentResult qssr_search(const CMatrix &channel, double noise_std, Rng &rng,
                            const BeamShaper &shaper = IdentityShaper());
// Steers both full arrays at the dominant path.
AlignmentResult oracle_alignment(const PathChannel &channel);

inline AlignmentResult exhaustive_search(const PathChannel &c, double s, Rng &r) { return exhaustive_search(c.matrix, s, r); }
inline AlignmentResult binary_search(const PathChannel &c, double s, Rng &r) { return binary_search(c.matrix, s, r); }
inline AlignmentResult qssr_search(const PathChannel &c, double s, Rng &r) { return qssr_search(c.matrix, s, r); }

// |w^H H f|^2 with the beamformers chosen by the alignment.
double evaluate(const AlignmentResult &result, const CMatrix &channel);
inline double evaluate(const AlignmentResult &result, const PathChannel &channel)
{
    return evaluate(result, channel.matrix);
}

// Closed-form measurement budgets.
std::size_t exhaustive_measurements(std::size_t n_tx, std::size_t n_rx);
std::size_t binary_measurements(std::size_t n_tx, std::size_t n_rx);
std::size_t qssr_measurements(std::size_t n_tx, std::size_t n_rx);

} // namespace qssr

#endif
