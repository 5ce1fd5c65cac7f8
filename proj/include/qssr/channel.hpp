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

#ifndef QSSR_CHANNEL_HPP
#define QSSR_CHANNEL_HPP

#include "qssr/arraymath.hpp"
#include "qssr/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace qssr {

struct PathParams {
    Complex gain;          // alpha_l, after normalization
    NormalizedAngle aoa;   // theta_l
    NormalizedAngle aod;   // phi_l
};

// Narrowband S-V channel. `paths` is empty for imported channels.
struct PathChannel {
    std::vector<PathParams> paths;   // sorted by descending |gain|
    CMatrix matrix;                  // n_rx x n_tx, unit Frobenius norm
    std::size_t n_tx = 0;
    std::size_t n_rx = 0;

    bool has_paths() const { return !paths.empty(); }
    const PathParams &dominant() const;
};

struct ChannelEnsembleConfig {
    std::size_t n_tx = 64;
    std::size_t n_rx = 16;
    std::size_t n_paths = 3;
    double dominant_gain_variance = 1.0;
    double secondary_gain_variance = 0.01;
    std::uint64_t seed = 1;

    // L = 3, alpha_1 ~ CN(0,1), alpha_2,3 ~ CN(0,0.01).
    static ChannelEnsembleConfig los(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed = 1);
    // L = 8, all gains CN(0,1).
    static ChannelEnsembleConfig nlos(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed = 1);
    // Pure line of sight, L = 1.
    static ChannelEnsembleConfig single_path(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed = 1);

    void validate() const;
};

// Sum of rank-one path terms, no normalization.
CMatrix compose_paths(const std::vector<PathParams> &paths, std::size_t n_rx, std::size_t n_tx);

// Draws path parameters from `rng`, sorts them, rescales the gains so that
// ||H||_F = 1 and builds the matrix from the rescaled gains.
PathChannel generate_channel(const ChannelEnsembleConfig &config, Rng &rng);
PathChannel generate_los_channel(const ChannelEnsembleConfig &config, Rng &rng);
PathChannel generate_nlos_channel(const ChannelEnsembleConfig &config, Rng &rng);

// Same draw as generate_channel, before normalization. Used for ensemble
// statistics.
CMatrix generate_unnormalized_matrix(const ChannelEnsembleConfig &config, Rng &rng);

// Channel `index` of the ensemble defined by config.seed.
PathChannel ensemble_member(const ChannelEnsembleConfig &config, std::uint64_t index);

struct Measurement {
    Complex raw;      // y
    double power = 0; // |y|^2
};

// y = w^H H f + w^H n with a unit pilot and n ~ CN(0, noise_std^2 I).
Measurement measure(const CMatrix &channel, const CVector &tx_vector, const CVector &rx_vector,
                    double noise_std, Rng &rng);
inline Measurement measure(const PathChannel &channel, const CVector &tx_vector,
                           const CVector &rx_vector, double noise_std, Rng &rng)
{
    return measure(channel.matrix, tx_vector, rx_vector, noise_std, rng);
}

// noise_std such that ||H||^2 / sigma^2 equals the SNR for a unit-norm channel.
double noise_std_for_snr_db(double snr_db);

class ChannelFileError : public std::runtime_error {
public:
    ChannelFileError(const std::string &what, std::size_t line);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// CSV channel file: header `n_rx,n_tx,count`, then `count` blocks of n_rx
// lines with n_tx `re+imj` entries each.
void write_channels(std::ostream &out, const std::vector<PathChannel> &channels);
void export_channels(const std::filesystem::path &path, const std::vector<PathChannel> &channels);
std::vector<PathChannel> read_channels(std::istream &in);
std::vector<PathChannel> import_channels(const std::filesystem::path &path);

} // namespace qssr

#endif
