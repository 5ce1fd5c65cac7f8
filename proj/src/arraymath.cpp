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

#include "qssr/arraymath.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace qssr {

namespace {

constexpr double kPi = std::numbers::pi;
// Below this |sin| the Dirichlet quotient is replaced by its series limit.
constexpr double kSingularSine = 1e-12;

void check_index(std::size_t layer_size, std::size_t index)
{
    if (index < 1 || index > layer_size)
        throw std::invalid_argument("codeword index " + std::to_string(index) +
                                    " outside 1.." + std::to_string(layer_size));
}

// (sin(M x) / sin(x))^2 / M^2 with the removable singularity at sin(x) = 0.
double dirichlet_power(std::size_t m, double x)
{
    const double md = static_cast<double>(m);
    const double s = std::sin(x);
    if (std::abs(s) < kSingularSine) {
        // x = k pi + eps; sin(M x)/sin(x) = (+-) M (1 - (M^2 - 1) eps^2 / 6 + ...)
        const double eps = x - kPi * std::round(x / kPi);
        const double r = 1.0 - (md * md - 1.0) * eps * eps / 6.0;
        return r * r;
    }
    const double q = std::sin(md * x) / (md * s);
    return q * q;
}

} // namespace

double wrap_angle(double value)
{
    if (value >= -1.0 && value <= 1.0)
        return value;
    double r = std::fmod(value + 1.0, 2.0);
    if (r < 0.0)
        r += 2.0;
    return r - 1.0;
}

CVector steering(std::size_t n_antennas, double angle)
{
    if (n_antennas == 0)
        throw std::invalid_argument("steering: n_antennas must be >= 1");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_antennas));
    CVector a(static_cast<Eigen::Index>(n_antennas));
    for (std::size_t n = 0; n < n_antennas; ++n) {
        const double phase = kPi * angle * static_cast<double>(n);
        a[static_cast<Eigen::Index>(n)] = Complex(scale * std::cos(phase), scale * std::sin(phase));
    }
    return a;
}

double codeword_pointing(std::size_t layer_size, std::size_t index)
{
    check_index(layer_size, index);
    return -1.0 + static_cast<double>(2 * index - 1) / static_cast<double>(layer_size);
}

Codeword make_codeword(std::size_t layer_size, std::size_t index, std::size_t aperture)
{
    if (layer_size < 2)
        throw std::invalid_argument("dft_codebook: layer size must be >= 2");
    if (aperture < layer_size)
        throw std::invalid_argument("dft_codebook: aperture smaller than layer size");
    Codeword cw;
    const double pointing = codeword_pointing(layer_size, index);
    cw.vector = CVector::Zero(static_cast<Eigen::Index>(aperture));
    cw.vector.head(static_cast<Eigen::Index>(layer_size)) = steering(layer_size, pointing);
    cw.pointing = NormalizedAngle(pointing);
    cw.layer_size = layer_size;
    cw.index = index;
    return cw;
}

Codebook::Codebook(std::size_t layer_size, std::size_t aperture) : aperture_(aperture)
{
    codewords_.reserve(layer_size);
    for (std::size_t p = 1; p <= layer_size; ++p)
        codewords_.push_back(make_codeword(layer_size, p, aperture));
    if (codewords_.empty())
        throw std::invalid_argument("dft_codebook: layer size must be >= 2");
}

const Codeword &Codebook::operator[](std::size_t index) const
{
    check_index(codewords_.size(), index);
    return codewords_[index - 1];
}

Codebook dft_codebook(std::size_t layer_size, std::size_t aperture)
{
    return Codebook(layer_size, aperture == 0 ? layer_size : aperture);
}

GainRatio GainRatio::finite(double value)
{
    if (!(value >= 0.0) || std::isinf(value))
        throw std::invalid_argument("GainRatio::finite: value must be finite and >= 0");
    return GainRatio(value, false);
}

double GainRatio::value() const
{
    if (infinite_)
        throw std::logic_error("GainRatio::value: ratio is infinite");
    return value_;
}

bool GainRatio::operator<(const GainRatio &other) const
{
    if (infinite_)
        return false;
    if (other.infinite_)
        return true;
    return value_ < other.value_;
}

double beam_gain(std::size_t layer_size, std::size_t p, double angle)
{
    const double pointing = codeword_pointing(layer_size, p);
    return dirichlet_power(layer_size, kPi * (angle - pointing) / 2.0);
}

GainRatio gain_ratio(std::size_t layer_size, std::size_t p, std::size_t q, double angle)
{
    if (p == q)
        throw std::invalid_argument("gain_ratio: p and q must differ");
    const double half_p = kPi * (angle - codeword_pointing(layer_size, p)) / 2.0;
    // sin(x - k pi / M) evaluated through the q offset so that it is exactly
    // zero at the peak of beam q.
    const double half_q = kPi * (angle - codeword_pointing(layer_size, q)) / 2.0;
    const double den = std::sin(half_p);
    if (std::abs(den) < kSingularSine)
        return GainRatio::infinite();
    const double r = std::sin(half_q) / den;
    return GainRatio::finite(r * r);
}

double gain_ratio_derivative(std::size_t layer_size, std::size_t p, std::size_t q, double angle)
{
    if (p == q)
        throw std::invalid_argument("gain_ratio_derivative: p and q must differ");
    const double half_p = kPi * (angle - codeword_pointing(layer_size, p)) / 2.0;
    const double half_q = kPi * (angle - codeword_pointing(layer_size, q)) / 2.0;
    const double den = std::sin(half_p);
    if (std::abs(den) < kSingularSine)
        throw SingularityError("gain_ratio_derivative: angle at the peak of beam p");
    const double k = static_cast<double>(q) - static_cast<double>(p);
    const double shift = kPi * k / static_cast<double>(layer_size);
    return kPi * std::sin(shift) * std::sin(half_q) / (den * den * den);
}

NormalizedAngle invert_ratio(std::size_t layer_size, std::size_t p, std::size_t q, GainRatio ratio)
{
    if (q != p + 1)
        throw std::invalid_argument("invert_ratio: beams must be adjacent with q = p + 1");
    double lo = codeword_pointing(layer_size, p);
    double hi = codeword_pointing(layer_size, q);
    if (ratio.is_infinite())
        return NormalizedAngle(lo);
    const double target = ratio.value();
    if (target == 0.0)
        return NormalizedAngle(hi);
    while (hi - lo >= kBisectionTolerance) {
        const double mid = 0.5 * (lo + hi);
        const GainRatio r = gain_ratio(layer_size, p, q, mid);
        if (r.is_infinite() || r.value() > target)
            lo = mid;
        else
            hi = mid;
    }
    return NormalizedAngle(0.5 * (lo + hi));
}

double angle_error_sensitivity(std::size_t layer_size, std::size_t p, std::size_t q, double angle,
                               double ratio_perturbation)
{
    const double slope = gain_ratio_derivative(layer_size, p, q, angle);
    if (std::abs(slope) < kSingularSine)
        throw SingularityError("angle_error_sensitivity: ratio slope vanishes at this angle");
    return ratio_perturbation / slope;
}

} // namespace qssr
