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

#include "qssr/harness.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

namespace qssr {

namespace {

constexpr std::uint64_t kTrialNoiseDomain = 0x7121A1;
constexpr std::uint64_t kCalibrationChannelDomain = 0xCA1C4A;
constexpr std::uint64_t kTrainChannelDomain = 0x7EA1C4;

std::string fmt(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Impairment {
    ImpairmentProfile tx;
    ImpairmentProfile rx;
};

std::optional<Impairment> draw_impairment(const ExperimentConfig &config)
{
    if (!config.impairments)
        return std::nullopt;
    const ImpairmentSettings &s = *config.impairments;
    Rng base(s.seed);
    Rng tx_rng = base.substream(0);
    Rng rx_rng = base.substream(1);
    return Impairment{sample_profile(config.n_tx, s.sigma_d_wavelengths, s.sigma_p_radians, s.truncated, tx_rng),
                      sample_profile(config.n_rx, s.sigma_d_wavelengths, s.sigma_p_radians, s.truncated, rx_rng)};
}

// Effective channel with hardware errors applied when configured.
CMatrix effective_matrix(const PathChannel &channel, const std::optional<Impairment> &imp)
{
    return imp ? impaired_channel(channel, imp->tx, imp->rx) : channel.matrix;
}

AlignmentResult align(Strategy strategy, const PathChannel &channel, const CMatrix &matrix, double sigma, Rng &rng,
                      const BeamShaper &shaper, const NetModel *model)
{
    switch (strategy) {
    case Strategy::exhaustive: return exhaustive_search(matrix, sigma, rng, shaper);
    case Strategy::binary: return binary_search(matrix, sigma, rng, shaper);
    case Strategy::qssr: return qssr_search(matrix, sigma, rng, shaper);
    case Strategy::qssr_net: {
        const NetEstimator tx(model->tx);
        const NetEstimator rx(model->rx);
        return qssr_search(matrix, sigma, rng, tx, rx, shaper);
    }
    case Strategy::oracle: return oracle_alignment(channel);
    }
    throw std::logic_error("align: unknown strategy");
}

// Runs fn(i) for i in [0, count) on `workers` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error)
                        error = std::current_exception();
                    next = count;
                }
            }
        });
    for (std::thread &t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

ImpairedChannelStream calibration_stream(const ExperimentConfig &config, const Impairment &imp)
{
    const Scenario scenario = config.scenario == Scenario::imported ? Scenario::los : config.scenario;
    const ChannelEnsembleConfig ens =
        ensemble_config(scenario, config.n_tx, config.n_rx, stream_key(config.seed, kCalibrationChannelDomain));
    return [ens, imp](std::uint64_t index) { return impaired_channel(ensemble_member(ens, index), imp.tx, imp.rx); };
}

} // namespace

ChannelEnsembleConfig ensemble_config(Scenario scenario, std::size_t n_tx, std::size_t n_rx, std::uint64_t seed)
{
    switch (scenario) {
    case Scenario::los: return ChannelEnsembleConfig::los(n_tx, n_rx, seed);
    case Scenario::nlos: return ChannelEnsembleConfig::nlos(n_tx, n_rx, seed);
    case Scenario::single_path: return ChannelEnsembleConfig::single_path(n_tx, n_rx, seed);
    case Scenario::imported: break;
    }
    throw ConfigError("scenario", "imported channels have no generating ensemble");
}

NetModel model_from_state(const TrainConfig &config, const TrainState &state)
{
    return NetModel{config.n_tx, config.n_rx, state.tx_net, state.rx_net};
}

ModelSet load_models(const std::vector<std::filesystem::path> &paths)
{
    ModelSet models;
    for (const auto &path : paths) {
        Checkpoint cp = load_checkpoint(path);
        models.push_back(model_from_state(cp.config, cp.state));
    }
    return models;
}

const NetModel *find_model(const ModelSet &models, std::size_t n_tx, std::size_t n_rx)
{
    for (const NetModel &m : models)
        if (m.n_tx == n_tx && m.n_rx == n_rx)
            return &m;
    return nullptr;
}

ExperimentResult run_experiment(const ExperimentConfig &config, const ModelSet &models)
{
    config.validate();
    const NetModel *model = find_model(models, config.n_tx, config.n_rx);
    for (Strategy s : config.strategies)
        if (s == Strategy::qssr_net && !model)
            throw ConfigError("checkpoints", "qssr_net needs a trained network for n_tx=" + std::to_string(config.n_tx) +
                                                 ", n_rx=" + std::to_string(config.n_rx));

    std::vector<PathChannel> imported;
    if (config.scenario == Scenario::imported) {
        imported = import_channels(config.channels_path);
        if (imported.size() < config.n_trials)
            throw ConfigError("n_trials", "channel file holds only " + std::to_string(imported.size()) + " channels");
        for (const PathChannel &c : imported)
            if (c.n_tx != config.n_tx || c.n_rx != config.n_rx)
                throw ConfigError("channels_path", "channel dimensions differ from n_tx/n_rx");
    }
    const std::optional<ChannelEnsembleConfig> ensemble =
        config.scenario == Scenario::imported
            ? std::nullopt
            : std::optional(ensemble_config(config.scenario, config.n_tx, config.n_rx, config.seed));
    const std::optional<Impairment> imp = draw_impairment(config);

    ExperimentResult result;
    CalibrationState compensation = CalibrationState::zero(config.n_tx, config.n_rx);
    if (config.calibration) {
        const Aligner aligner = model ? net_aligner(model->tx, model->rx) : qssr_aligner();
        result.calibration =
            calibrate(compensation, aligner, calibration_stream(config, *imp), *config.calibration);
        compensation = result.calibration->state;
    }
    const CompensationShaper compensated(compensation);
    const IdentityShaper identity;
    const BeamShaper &shaper = config.calibration ? static_cast<const BeamShaper &>(compensated) : identity;

    const std::size_t cells = config.strategies.size() * config.snr_grid_db.size();
    std::vector<std::vector<TrialRecord>> per_trial(config.n_trials);
    parallel_for(config.n_trials, config.workers, [&](std::size_t trial) {
        const PathChannel channel = ensemble ? ensemble_member(*ensemble, trial) : imported[trial];
        const CMatrix matrix = effective_matrix(channel, imp);
        std::vector<TrialRecord> &out = per_trial[trial];
        out.reserve(cells);
        for (Strategy strategy : config.strategies) {
            for (double snr : config.snr_grid_db) {
                Rng rng(config.seed, stream_key(kTrialNoiseDomain, trial, static_cast<std::uint64_t>(strategy),
                                                std::bit_cast<std::uint64_t>(snr)));
                const AlignmentResult a =
                    align(strategy, channel, matrix, noise_std_for_snr_db(snr), rng, shaper, model);
                TrialRecord r;
                r.trial = trial;
                r.strategy = strategy;
                r.snr_db = snr;
                r.n_tx = config.n_tx;
                r.n_rx = config.n_rx;
                r.power = evaluate(a, matrix);
                r.meas_count = a.measurement_count;
                r.phi_hat = a.tx_angle.value();
                r.theta_hat = a.rx_angle.value();
                r.phi_true = channel.has_paths() ? channel.dominant().aod.value()
                                                 : std::numeric_limits<double>::quiet_NaN();
                r.theta_true = channel.has_paths() ? channel.dominant().aoa.value()
                                                   : std::numeric_limits<double>::quiet_NaN();
                r.flags = a.flags;
                if (!std::isfinite(r.power))
                    throw std::runtime_error("run_experiment: non-finite power in trial " + std::to_string(trial));
                out.push_back(r);
            }
        }
    });

    result.records.reserve(config.n_trials * cells);
    for (std::size_t cell = 0; cell < cells; ++cell)
        for (std::size_t trial = 0; trial < config.n_trials; ++trial)
            result.records.push_back(per_trial[trial][cell]);
    result.summary = summarize(result.records);
    return result;
}

std::vector<SummaryRow> summarize(std::span<const TrialRecord> records)
{
    struct Acc {
        SummaryRow row;
        double sum = 0;
    };
    std::vector<Acc> cells;
    for (const TrialRecord &r : records) {
        auto it = std::find_if(cells.begin(), cells.end(), [&](const Acc &a) {
            return a.row.strategy == r.strategy && a.row.snr_db == r.snr_db && a.row.n_tx == r.n_tx &&
                   a.row.n_rx == r.n_rx;
        });
        if (it == cells.end()) {
            cells.push_back({SummaryRow{r.strategy, r.snr_db, r.n_tx, r.n_rx, 0, 0}, 0});
            it = cells.end() - 1;
        }
        it->sum += r.power;
        ++it->row.trials;
    }
    std::vector<SummaryRow> out;
    for (Acc &a : cells) {
        a.row.mean_power_db = 10.0 * std::log10(a.sum / static_cast<double>(a.row.trials));
        out.push_back(a.row);
    }
    return out;
}

std::vector<SummaryRow> run_antenna_sweep(const ExperimentConfig &config, const ModelSet &models)
{
    if (config.n_tx_list.empty())
        throw ConfigError("n_tx_list", "must not be empty");
    std::vector<SummaryRow> rows;
    for (std::size_t n_tx : config.n_tx_list) {
        ExperimentConfig c = config;
        c.n_tx = n_tx;
        c.train.n_tx = n_tx;
        std::erase_if(c.strategies, [&](Strategy s) {
            return s == Strategy::qssr_net && !find_model(models, n_tx, config.n_rx);
        });
        if (c.strategies.empty())
            continue;
        const ExperimentResult r = run_experiment(c, models);
        rows.insert(rows.end(), r.summary.begin(), r.summary.end());
    }
    return rows;
}

std::vector<ScatterRow> run_error_scatter(const ExperimentConfig &config, const ModelSet &models)
{
    if (config.scenario == Scenario::imported)
        throw ConfigError("scenario", "the error scatter needs true angles, which imported channels lack");
    const ExperimentResult r = run_experiment(config, models);
    std::vector<ScatterRow> rows;
    rows.reserve(r.records.size());
    for (const TrialRecord &t : r.records)
        rows.push_back({t.trial, t.strategy, t.snr_db, t.theta_true, t.theta_hat, t.phi_true, t.phi_hat});
    return rows;
}

void write_trials(std::ostream &out, std::span<const TrialRecord> records)
{
    out << kTrialHeader << '\n';
    for (const TrialRecord &r : records)
        out << r.trial << ',' << strategy_name(r.strategy) << ',' << fmt_short(r.snr_db) << ',' << r.n_tx << ','
            << r.n_rx << ',' << fmt(r.power) << ',' << r.meas_count << ',' << fmt(r.phi_hat) << ','
            << fmt(r.theta_hat) << ',' << fmt(r.phi_true) << ',' << fmt(r.theta_true) << ',' << r.flags << '\n';
}

void write_summary(std::ostream &out, std::span<const SummaryRow> rows)
{
    out << kSummaryHeader << '\n';
    for (const SummaryRow &r : rows)
        out << strategy_name(r.strategy) << ',' << fmt_short(r.snr_db) << ',' << r.n_tx << ',' << r.n_rx << ','
            << r.trials << ',' << fmt(r.mean_power_db) << '\n';
}

void write_scatter(std::ostream &out, std::span<const ScatterRow> rows)
{
    out << kScatterHeader << '\n';
    for (const ScatterRow &r : rows)
        out << r.trial << ',' << strategy_name(r.strategy) << ',' << fmt_short(r.snr_db) << ','
            << fmt(r.theta_true) << ',' << fmt(r.theta_hat) << ',' << fmt(r.phi_true) << ',' << fmt(r.phi_hat)
            << '\n';
}

void write_calibration_trace(std::ostream &out, std::span<const CalibrationEpoch> trace)
{
    out << kCalibrationHeader << '\n';
    for (const CalibrationEpoch &e : trace)
        out << e.epoch << ',' << fmt(e.loss) << ',' << fmt(e.power) << ',' << fmt(10.0 * std::log10(e.power))
            << '\n';
}

void train_command(const ExperimentConfig &config, const std::filesystem::path &checkpoint, bool resume,
                   std::ostream &log)
{
    if (checkpoint.empty())
        throw ConfigError("checkpoint", "train needs --checkpoint");
    TrainConfig tc = config.train;
    tc.n_tx = config.n_tx;
    tc.n_rx = config.n_rx;
    tc.validate();
    const ChannelEnsembleConfig ens =
        ChannelEnsembleConfig::los(tc.n_tx, tc.n_rx, stream_key(tc.seed, kTrainChannelDomain));
    const ChannelSource source = [ens](std::uint64_t index) { return ensemble_member(ens, index); };

    TrainState state(tc.shape);
    if (resume && std::filesystem::exists(checkpoint)) {
        Checkpoint cp = load_checkpoint(checkpoint);
        if (cp.config.n_tx != tc.n_tx || cp.config.n_rx != tc.n_rx || cp.config.shape.hidden_width != tc.shape.hidden_width ||
            cp.config.shape.gru_layers != tc.shape.gru_layers || cp.config.shape.head_width != tc.shape.head_width)
            throw ConfigError("checkpoint", "checkpoint does not match the configured network");
        state = std::move(cp.state);
        log << "resuming after epoch " << state.epochs_done << '\n';
    } else {
        state = initial_train_state(tc);
    }

    std::ofstream trace;
    if (!config.output.empty()) {
        trace.open(config.output);
        if (!trace)
            throw std::runtime_error("cannot open " + config.output.string());
        trace << kTrainHeader << '\n';
        for (std::size_t e = 0; e < state.epoch_loss.size(); ++e)
            trace << e << ',' << fmt(state.epoch_loss[e]) << ',' << fmt(state.epoch_surrogate[e]) << '\n';
    }
    train(tc, source, state, [&](std::size_t epoch, double loss, double surrogate) {
        log << "epoch " << epoch << " loss " << fmt_short(loss) << " surrogate " << fmt_short(surrogate) << std::endl;
        if (trace.is_open())
            trace << epoch << ',' << fmt(loss) << ',' << fmt(surrogate) << '\n';
    });
    save_checkpoint(checkpoint, tc, state);
    log << "checkpoint written to " << checkpoint.string() << '\n';
}

CalibrationResult calibrate_command(const ExperimentConfig &config, const ModelSet &models, std::ostream &log)
{
    config.validate();
    if (!config.impairments)
        throw ConfigError("impairment.enabled", "calibration needs an impairment profile");
    const NetModel *model = find_model(models, config.n_tx, config.n_rx);
    if (!model)
        throw ConfigError("checkpoints", "calibrate needs a trained network for n_tx=" + std::to_string(config.n_tx) +
                                             ", n_rx=" + std::to_string(config.n_rx));
    const CalibrationRunConfig run = config.calibration.value_or(CalibrationRunConfig{});
    const Impairment imp = *draw_impairment(config);
    CalibrationResult r = calibrate(CalibrationState::zero(config.n_tx, config.n_rx), net_aligner(model->tx, model->rx),
                                    calibration_stream(config, imp), run, [&](const CalibrationEpoch &e) {
                                        log << "epoch " << e.epoch << " loss " << fmt_short(e.loss) << " power_db "
                                            << fmt_short(10.0 * std::log10(e.power)) << std::endl;
                                    });
    if (!config.output.empty()) {
        std::ofstream out(config.output);
        if (!out)
            throw std::runtime_error("cannot open " + config.output.string());
        write_calibration_trace(out, r.trace);
    }
    if (!config.state_output.empty())
        save_calibration(config.state_output, r.state);
    return r;
}

} // namespace qssr
