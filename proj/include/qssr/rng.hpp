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

#ifndef QSSR_RNG_HPP
#define QSSR_RNG_HPP

#include <array>
#include <complex>
#include <cstdint>

namespace qssr {

// Philox4x32-10 block function (Salmon et al., Random123). Exposed for the
// known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Counter-based random stream. A stream is identified by (seed, stream id);
// the output depends only on those two values and the number of draws taken,
// so trials can be generated in any order or on any worker.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    // Independent child stream. Deterministic in (seed, stream, id) and
    // unaffected by how many values were drawn from the parent.
    Rng substream(std::uint64_t id) const;

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller.
    double normal();

    // Circularly-symmetric complex Gaussian with E|z|^2 = variance.
    std::complex<double> complex_normal(double variance = 1.0);

private:
    void refill();

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64 finalizer, used to derive stream ids from structured keys.
std::uint64_t mix64(std::uint64_t x);

// Combine several key components into one stream id.
template <typename... Ts>
std::uint64_t stream_key(std::uint64_t first, Ts... rest)
{
    std::uint64_t h = mix64(first ^ 0x6a09e667f3bcc909ULL);
    ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(rest) + 0x9e3779b97f4a7c15ULL))), ...);
    return h;
}

} // namespace qssr

#endif
