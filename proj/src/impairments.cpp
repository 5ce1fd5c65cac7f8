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

#include "qssr/impairments.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qssr {

bool ImpairmentProfile::is_zero() const
{
    for (std::size_t n = 1; n < position_offsets.size(); ++n)
        if (position_offsets[n] != 0.0)
            return false;
    for (double p : phase_offsets)
        if (p != 0.0)
            return false;
    return true;
}

void ImpairmentProfile::validate() const
{
    if (position_offsets.size() != phase_offsets.size())
        throw std::invalid_argument("impairment profile: position and phase vectors differ in length");
    if (truncation) {
        for (double d : position_offsets)
            if (std::abs(d) > *truncation)
                throw std::invalid_argument("impairment profile: position offset beyond truncation bound");
    }
}

ImpairmentProfile ImpairmentProfile::zero(std::size_t n)
{
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::nullopt};
}

ImpairmentProfile sample_profile(std::size_t n, double sigma_d_wavelengths, double sigma_p_radians,
                                 bool truncated, Rng &rng)
{
    if (sigma_d_wavelengths < 0.0 || sigma_p_radians < 0.0)
        throw std::invalid_argument("sample_profile: sigmas must be >= 0");
    ImpairmentProfile profile = ImpairmentProfile::zero(n);
    if (truncated)
        profile.truncation = kPositionTruncationWavelengths;
    for (std::size_t i = 1; i < n; ++i) {
        double d = sigma_d_wavelengths * rng.normal();
        while (truncated && std::abs(d) > kPositionTruncationWavelengths)
            d = sigma_d_wavelengths * rng.normal();
        profile.position_offsets[i] = d;
    }
    for (std::size_t i = 0; i < n; ++i)
        profile.phase_offsets[i] = sigma_p_radians * rng.normal();
    return profile;
}

CVector position_matrix(const ImpairmentProfile &profile, double angle)
{
    const auto n = static_cast<Eigen::Index>(profile.position_offsets.size());
    CVector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == 0) {
            d[i] = Complex(1.0, 0.0);
            continue;
        }
        const double phase = 2.0 * std::numbers::pi * profile.position_offsets[static_cast<std::size_t>(i)] * angle;
        d[i] = Complex(std::cos(phase), std::sin(phase));
    }
    return d;
}

CVector phase_matrix(const ImpairmentProfile &profile)
{
    const auto n = static_cast<Eigen::Index>(profile.phase_offsets.size());
    CVector p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double phase = profile.phase_offsets[static_cast<std::size_t>(i)];
        p[i] = Complex(std::cos(phase), std::sin(phase));
    }
    return p;
}

CVector impaired_response(const ImpairmentProfile &profile, double angle)
{
    const CVector a = steering(profile.size(), angle);
    return (position_matrix(profile, angle).array() * phase_matrix(profile).array() * a.array()).matrix();
}

CMatrix impaired_channel(const PathChannel &channel, const ImpairmentProfile &tx_profile,
                         const ImpairmentProfile &rx_profile)
{
    if (!channel.has_paths())
        throw std::invalid_argument("impaired_channel: channel has no path metadata");
    tx_profile.validate();
    rx_profile.validate();
    if (tx_profile.size() != channel.n_tx || rx_profile.size() != channel.n_rx)
        throw std::invalid_argument("impaired_channel: profile sizes do not match the arrays");
    CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(channel.n_rx), static_cast<Eigen::Index>(channel.n_tx));
    for (const auto &path : channel.paths) {
        const CVector ar = impaired_response(rx_profile, path.aoa.value());
        const CVector at = impaired_response(tx_profile, path.aod.value());
        h.noalias() += path.gain * ar * at.adjoint();
    }
    return h;
}

} // namespace qssr
