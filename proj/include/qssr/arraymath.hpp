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

#ifndef QSSR_ARRAYMATH_HPP
#define QSSR_ARRAYMATH_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace qssr {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Projects any real onto [-1, 1] using the period-2 symmetry of sine-space
// directions. Values already inside the interval are returned unchanged.
double wrap_angle(double value);

// Direction in sine space, always stored inside [-1, 1].
class NormalizedAngle {
public:
    NormalizedAngle() = default;
    explicit NormalizedAngle(double value) : value_(wrap_angle(value)) {}

    double value() const { return value_; }
    explicit operator double() const { return value_; }

    friend bool operator==(const NormalizedAngle &, const NormalizedAngle &) = default;

private:
    double value_ = 0.0;
};

class SingularityError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// ULA response a(N, angle) with half-wavelength spacing; element n equals
// exp(j n pi angle) / sqrt(N).
CVector steering(std::size_t n_antennas, double angle);
inline CVector steering(std::size_t n_antennas, NormalizedAngle angle)
{
    return steering(n_antennas, angle.value());
}

// Pointing direction of the p-th (1-based) codeword of a size-M DFT codebook.
double codeword_pointing(std::size_t layer_size, std::size_t index);

struct Codeword {
    CVector vector;          // a(M, pointing) on the first M elements, zeros beyond
    NormalizedAngle pointing;
    std::size_t layer_size = 0;
    std::size_t index = 0;   // 1-based
};

// Single codeword p of F_M, zero-padded to `aperture` elements.
Codeword make_codeword(std::size_t layer_size, std::size_t index, std::size_t aperture);

class Codebook {
public:
    Codebook(std::size_t layer_size, std::size_t aperture);

    std::size_t layer_size() const { return codewords_.size(); }
    std::size_t aperture() const { return aperture_; }
    // 1-based access, mirroring codebook notation.
    const Codeword &operator[](std::size_t index) const;
    const std::vector<Codeword> &codewords() const { return codewords_; }

private:
    std::size_t aperture_;
    std::vector<Codeword> codewords_;
};

// M-beam DFT codebook; codewords are zero-padded to `aperture` elements
// (defaults to M, i.e. no padding).
Codebook dft_codebook(std::size_t layer_size, std::size_t aperture = 0);

// Power ratio that may be +infinity. Infinity is a state, never the result of
// a division by zero.
class GainRatio {
public:
    static GainRatio finite(double value);
    static GainRatio infinite() { return GainRatio(0.0, true); }

    bool is_infinite() const { return infinite_; }
    double value() const; // throws std::logic_error when infinite

    // Ordering with infinity above every finite value.
    bool operator<(const GainRatio &other) const;

private:
    GainRatio(double v, bool inf) : value_(v), infinite_(inf) {}
    double value_;
    bool infinite_;
};

// |f_{M,p}^H a(M, angle)|^2 in Dirichlet-kernel form.
double beam_gain(std::size_t layer_size, std::size_t p, double angle);

// G_p / G_q, infinite exactly at the peak of beam p.
GainRatio gain_ratio(std::size_t layer_size, std::size_t p, std::size_t q, double angle);

// d(G_p/G_q)/d(angle). Throws SingularityError at the peak of beam p.
double gain_ratio_derivative(std::size_t layer_size, std::size_t p, std::size_t q, double angle);

// Inverse of the ratio of adjacent beams p and p+1 on [pointing_p, pointing_q],
// where the ratio decreases from +inf to 0. Bisection to 1e-9 in angle.
NormalizedAngle invert_ratio(std::size_t layer_size, std::size_t p, std::size_t q, GainRatio ratio);

// First-order angle error caused by a ratio perturbation.
double angle_error_sensitivity(std::size_t layer_size, std::size_t p, std::size_t q, double angle,
                               double ratio_perturbation);

inline constexpr double kBisectionTolerance = 1e-9;

} // namespace qssr

#endif
