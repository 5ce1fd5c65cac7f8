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

#ifndef QSSR_IMPAIRMENTS_HPP
#define QSSR_IMPAIRMENTS_HPP

#include "qssr/arraymath.hpp"
#include "qssr/channel.hpp"
#include "qssr/rng.hpp"

#include <optional>
#include <vector>

namespace qssr {

// Per-element hardware errors of one array side. Position offsets are in
// wavelengths along the array axis; element 1 is the position reference, so
// its offset never enters the array response.
struct ImpairmentProfile {
    std::vector<double> position_offsets; // delta_d,n [wavelengths]
    std::vector<double> phase_offsets;    // delta_phi,n [rad]
    std::optional<double> truncation;     // |delta_d,n| bound when sampled truncated

    std::size_t size() const { return phase_offsets.size(); }
    bool is_zero() const;
    void validate() const;

    static ImpairmentProfile zero(std::size_t n);
};

inline constexpr double kDefaultSigmaDWavelengths = 0.05;
inline constexpr double kDefaultSigmaPRadians = 0.1 * 3.14159265358979323846;
inline constexpr double kPositionTruncationWavelengths = 0.25;

// i.i.d. Gaussian draws; `truncated` redraws position offsets until they lie
// inside +-lambda/4.
ImpairmentProfile sample_profile(std::size_t n, double sigma_d_wavelengths, double sigma_p_radians,
                                 bool truncated, Rng &rng);

// Diagonal of D(angle): exp(j 2 pi delta_d,n angle), first entry 1.
CVector position_matrix(const ImpairmentProfile &profile, double angle);
// Diagonal of Phi: exp(j delta_phi,n).
CVector phase_matrix(const ImpairmentProfile &profile);

// D(angle) Phi a(N, angle): the response the impaired array actually has.
CVector impaired_response(const ImpairmentProfile &profile, double angle);

struct ImpairedArraySide {
    ImpairmentProfile profile;
    std::size_t n_antennas = 0;
};

// sum_l alpha_l D_r(theta_l) Phi_r a_r(theta_l) a_t^H(phi_l) Phi_t^H D_t^H(phi_l).
// Requires path metadata.
CMatrix impaired_channel(const PathChannel &channel, const ImpairmentProfile &tx_profile,
                         const ImpairmentProfile &rx_profile);

} // namespace qssr

#endif
