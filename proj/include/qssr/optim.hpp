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

#ifndef QSSR_OPTIM_HPP
#define QSSR_OPTIM_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace qssr {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::uint64_t step = 0;

    void reset(Eigen::Index n)
    {
        m = Eigen::VectorXd::Zero(n);
        v = Eigen::VectorXd::Zero(n);
        step = 0;
    }
};

// One bias-corrected adaptive-moment update: params -= lr * m_hat / (sqrt(v_hat) + eps).
inline void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd> &grad,
                      AdamState &state, double lr, const AdamOptions &opt = {})
{
    if (state.m.size() != params.size())
        state.reset(params.size());
    ++state.step;
    state.m = opt.beta1 * state.m + (1.0 - opt.beta1) * grad;
    state.v = opt.beta2 * state.v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + opt.epsilon);
}

} // namespace qssr

#endif
