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

#ifndef QSSR_HARNESS_HPP
#define QSSR_HARNESS_HPP

#include "qssr/calibration.hpp"
#include "qssr/channel.hpp"
#include "qssr/impairments.hpp"
#include "qssr/neural.hpp"
#include "qssr/search.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qssr {

// Invalid configuration; `field` is the dotted key path at fault.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string &message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field))
    {
    }
    const std::string &field() const { return field_; }

private:
    std::string field_;
};

enum class Scenario { los, nlos, single_path, imported };
std::string_view scenario_name(Scenario s);

struct ImpairmentSettings {
    double sigma_d_wavelengths = kDefaultSigmaDWavelengths;
    double sigma_p_radians = kDefaultSigmaPRadians;
    bool truncated = false;
    std::uint64_t seed = 7;
};

struct ExperimentConfig {
    Scenario scenario = Scenario::los;
    std::vector<Strategy> strategies{Strategy::exhaustive, Strategy::binary, Strategy::qssr, Strategy::oracle};
    std::size_t n_tx = 64;
    std::size_t n_rx = 16;
    std::vector<std::size_t> n_tx_list{16, 32, 64, 256}; // antenna sweep
    std::vector<double> snr_grid_db{5, 10, 15, 20, 25, 30};
    std::size_t n_trials = 1000;
    std::uint64_t seed = 1;
    std::optional<ImpairmentSettings> impairments;
    std::optional<CalibrationRunConfig> calibration;
    std::filesystem::path channels_path;           // imported scenario
    std::vector<std::filesystem::path> checkpoints; // trained networks, matched by array sizes
    std::filesystem::path output;
    std::filesystem::path state_output; // calibration state
    TrainConfig train;
    std::size_t workers = 1;

    void validate() const;
};

// Flat "key = value" text; '#' starts a comment. Lists are comma separated.
ExperimentConfig parse_config(std::istream &in);
ExperimentConfig load_config(const std::filesystem::path &path);

ChannelEnsembleConfig ensemble_config(Scenario scenario, std::size_t n_tx, std::size_t n_rx, std::uint64_t seed);

struct NetModel {
    std::size_t n_tx = 0;
    std::size_t n_rx = 0;
    QssrNet tx;
    QssrNet rx;
};
using ModelSet = std::vector<NetModel>;
ModelSet load_models(const std::vector<std::filesystem::path> &paths);
const NetModel *find_model(const ModelSet &models, std::size_t n_tx, std::size_t n_rx);
NetModel model_from_state(const TrainConfig &config, const TrainState &state);

struct TrialRecord {
    std::size_t trial = 0;
    Strategy strategy = Strategy::qssr;
    double snr_db = 0;
    std::size_t n_tx = 0;
    std::size_t n_rx = 0;
    double power = 0;
    std::size_t meas_count = 0;
    double phi_hat = 0;
    double theta_hat = 0;
    double phi_true = 0; // NaN when unknown
    double theta_true = 0;
    unsigned flags = 0;
};

struct SummaryRow {
    Strategy strategy = Strategy::qssr;
    double snr_db = 0;
    std::size_t n_tx = 0;
    std::size_t n_rx = 0;
    std::size_t trials = 0;
    double mean_power_db = 0; // 10 log10 of the mean linear power
};

struct ExperimentResult {
    std::vector<TrialRecord> records; // ordered by strategy, snr, trial
    std::vector<SummaryRow> summary;
    std::optional<CalibrationResult> calibration;
};

ExperimentResult run_experiment(const ExperimentConfig &config, const ModelSet &models = {});
// One summary row per (strategy, n_tx, snr); qssr_net is skipped for sizes without a model.
std::vector<SummaryRow> run_antenna_sweep(const ExperimentConfig &config, const ModelSet &models = {});

struct ScatterRow {
    std::size_t trial = 0;
    Strategy strategy = Strategy::qssr;
    double snr_db = 0;
    double theta_true = 0;
    double theta_hat = 0;
    double phi_true = 0;
    double phi_hat = 0;
};
std::vector<ScatterRow> run_error_scatter(const ExperimentConfig &config, const ModelSet &models = {});

std::vector<SummaryRow> summarize(std::span<const TrialRecord> records);

inline constexpr const char *kTrialHeader =
    "trial,strategy,snr_db,n_tx,n_rx,power_linear,meas_count,phi_hat,theta_hat,phi_true,theta_true,flags";
inline constexpr const char *kSummaryHeader = "strategy,snr_db,n_tx,n_rx,trials,mean_power_db";
inline constexpr const char *kScatterHeader = "trial,strategy,snr_db,theta_true,theta_hat,phi_true,phi_hat";
inline constexpr const char *kCalibrationHeader = "epoch,loss,power_linear,power_db";
inline constexpr const char *kTrainHeader = "epoch,loss,surrogate_loss";

void write_trials(std::ostream &out, std::span<const TrialRecord> records);
void write_summary(std::ostream &out, std::span<const SummaryRow> rows);
void write_scatter(std::ostream &out, std::span<const ScatterRow> rows);
void write_calibration_trace(std::ostream &out, std::span<const CalibrationEpoch> trace);

// CLI-level commands; results go to config.output.
void train_command(const ExperimentConfig &config, const std::filesystem::path &checkpoint, bool resume,
                   std::ostream &log);
CalibrationResult calibrate_command(const ExperimentConfig &config, const ModelSet &models, std::ostream &log);

} // namespace qssr

#endif
