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

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace qssr;

namespace {

ExperimentConfig parse(const std::string &text)
{
    std::istringstream in(text);
    return parse_config(in);
}

std::string field_of(const std::string &text)
{
    try {
        parse(text).validate();
    } catch (const ConfigError &e) {
        return e.field();
    }
    return "<none>";
}

ExperimentConfig small_run()
{
    ExperimentConfig c;
    c.n_trials = 40;
    c.snr_grid_db = {10, 30};
    c.seed = 3;
    return c;
}

std::string trials_csv(const ExperimentResult &r)
{
    std::ostringstream out;
    write_trials(out, r.records);
    write_summary(out, r.summary);
    return out.str();
}

std::filesystem::path temp(const std::string &name)
{
    return std::filesystem::temp_directory_path() / ("qssr_test_" + name);
}

int run_cli(const std::string &args)
{
    const std::string cmd = std::string(QSSR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config parsing")
{
    const ExperimentConfig c = parse("# comment\n"
                                     "scenario = nlos\n"
                                     "strategies = binary, qssr   # trailing comment\n"
                                     "n_tx = 32\n"
                                     "snr_grid_db = 0, 7.5\n"
                                     "n_trials = 12\n"
                                     "seed = 99\n"
                                     "impairment.enabled = true\n"
                                     "impairment.sigma_p_radians = 0.2\n"
                                     "train.epochs = 3\n");
    CHECK(c.scenario == Scenario::nlos);
    CHECK(c.strategies == std::vector<Strategy>{Strategy::binary, Strategy::qssr});
    CHECK(c.n_tx == 32);
    CHECK(c.n_rx == 16);
    CHECK(c.snr_grid_db == std::vector<double>{0, 7.5});
    CHECK(c.n_trials == 12);
    REQUIRE(c.impairments.has_value());
    CHECK(c.impairments->sigma_p_radians == 0.2);
    CHECK(c.impairments->sigma_d_wavelengths == kDefaultSigmaDWavelengths);
    CHECK_FALSE(c.calibration.has_value());
    CHECK(c.train.epochs == 3);
    CHECK(c.train.seed == 99);
    CHECK_NOTHROW(c.validate());

    const ExperimentConfig d = parse("");
    CHECK(d.n_trials == 1000);
    CHECK(d.strategies.size() == 4);
    CHECK(d.snr_grid_db.size() == 6);
}

TEST_CASE("config errors name the field")
{
    CHECK(field_of("n_tx = 48\n") == "n_tx");
    CHECK(field_of("n_rx = 1\n") == "n_rx");
    CHECK(field_of("n_trials = 0\n") == "n_trials");
    CHECK(field_of("n_trials = many\n") == "n_trials");
    CHECK(field_of("bogus = 1\n") == "bogus");
    CHECK(field_of("scenario = indoor\n") == "scenario");
    CHECK(field_of("strategies = qssr, random\n") == "strategies");
    CHECK(field_of("train.batch_size = 0\n") == "train.batch_size");
    CHECK(field_of("calibration.enabled = true\n") == "calibration.enabled");
    CHECK(field_of("impairment.enabled = true\nimpairment.sigma_d_wavelengths = -1\n") ==
          "impairment.sigma_d_wavelengths");
    CHECK(field_of("scenario = imported\n") == "channels_path");
    CHECK(field_of("impairment.enabled = maybe\n") == "impairment.enabled");
    CHECK(field_of("just text\n") == "");
    CHECK_THROWS_AS(load_config(temp("missing.cfg")), ConfigError);
}

TEST_CASE("measurement counts per strategy")
{
    ExperimentConfig c = small_run();
    c.n_trials = 3;
    const ExperimentResult r = run_experiment(c);
    std::map<Strategy, std::size_t> counts;
    for (const TrialRecord &rec : r.records)
        counts[rec.strategy] = rec.meas_count;
    CHECK(counts[Strategy::exhaustive] == 1024);
    CHECK(counts[Strategy::binary] == 20);
    CHECK(counts[Strategy::qssr] == 20);
    CHECK(counts[Strategy::oracle] == 0);
    CHECK(r.records.size() == 4 * 2 * 3);
}

TEST_CASE("records are ordered and the summary averages linear power")
{
    const ExperimentConfig c = small_run();
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.records.size() == c.strategies.size() * c.snr_grid_db.size() * c.n_trials);
    std::size_t k = 0;
    for (Strategy s : c.strategies)
        for (double snr : c.snr_grid_db)
            for (std::size_t t = 0; t < c.n_trials; ++t, ++k) {
                CHECK(r.records[k].strategy == s);
                CHECK(r.records[k].snr_db == snr);
                CHECK(r.records[k].trial == t);
            }
    REQUIRE(r.summary.size() == c.strategies.size() * c.snr_grid_db.size());
    for (const SummaryRow &row : r.summary) {
        double sum = 0;
        for (const TrialRecord &rec : r.records)
            if (rec.strategy == row.strategy && rec.snr_db == row.snr_db)
                sum += rec.power;
        CHECK(row.trials == c.n_trials);
        CHECK(row.mean_power_db == doctest::Approx(10 * std::log10(sum / c.n_trials)));
    }
    // the same channel is used by every strategy in a trial
    for (const TrialRecord &rec : r.records) {
        CHECK(rec.phi_true == r.records[rec.trial].phi_true);
        CHECK(rec.power <= 1.0 + 1e-12);
    }
}

TEST_CASE("output is independent of the worker count")
{
    ExperimentConfig c = small_run();
    c.scenario = Scenario::nlos;
    const std::string one = trials_csv(run_experiment(c));
    c.workers = 3;
    const std::string three = trials_csv(run_experiment(c));
    CHECK(one == three);
    c.seed = 4;
    CHECK(trials_csv(run_experiment(c)) != one);
}

TEST_CASE("zero-variance impairments change nothing")
{
    ExperimentConfig c = small_run();
    const std::string clean = trials_csv(run_experiment(c));
    c.impairments = ImpairmentSettings{0.0, 0.0, false, 7};
    CHECK(trials_csv(run_experiment(c)) == clean);
    c.impairments = ImpairmentSettings{};
    CHECK(trials_csv(run_experiment(c)) != clean);
}

TEST_CASE("imported channels reproduce the generated run")
{
    ExperimentConfig c = small_run();
    c.strategies = {Strategy::binary, Strategy::qssr};
    const ExperimentResult generated = run_experiment(c);

    const auto ens = ensemble_config(c.scenario, c.n_tx, c.n_rx, c.seed);
    std::vector<PathChannel> channels;
    for (std::size_t i = 0; i < c.n_trials; ++i)
        channels.push_back(ensemble_member(ens, i));
    const auto path = temp("channels.csv");
    export_channels(path, channels);
    c.scenario = Scenario::imported;
    c.channels_path = path;
    const ExperimentResult imported = run_experiment(c);
    REQUIRE(imported.records.size() == generated.records.size());
    for (std::size_t i = 0; i < imported.records.size(); ++i) {
        CHECK(imported.records[i].power == doctest::Approx(generated.records[i].power).epsilon(1e-12));
        CHECK(std::isnan(imported.records[i].phi_true));
    }
    c.n_trials = 1000;
    CHECK_THROWS(run_experiment(c)); // file holds fewer channels than trials
    std::filesystem::remove(path);
}

TEST_CASE("antenna sweep and scatter")
{
    ExperimentConfig c = small_run();
    c.n_trials = 10;
    c.n_tx_list = {16, 32};
    c.strategies = {Strategy::binary, Strategy::qssr, Strategy::qssr_net};
    const auto rows = run_antenna_sweep(c);
    CHECK(rows.size() == 2 * 2 * 2); // qssr_net has no model here
    for (const SummaryRow &r : rows) {
        CHECK(r.strategy != Strategy::qssr_net);
        CHECK(r.trials == 10);
    }

    c.strategies = {Strategy::qssr};
    const auto scatter = run_error_scatter(c);
    CHECK(scatter.size() == 2 * 10);
    const auto ens = ensemble_config(c.scenario, c.n_tx, c.n_rx, c.seed);
    for (const ScatterRow &s : scatter) {
        const PathChannel ch = ensemble_member(ens, s.trial);
        CHECK(s.phi_true == ch.dominant().aod.value());
        CHECK(s.theta_true == ch.dominant().aoa.value());
        CHECK(std::abs(s.phi_hat) <= 1.0);
    }
    std::ostringstream out;
    write_scatter(out, scatter);
    CHECK(out.str().rfind(std::string(kScatterHeader) + "\n", 0) == 0);
}

TEST_CASE("network strategies need a matching model")
{
    ExperimentConfig c = small_run();
    c.strategies = {Strategy::qssr_net};
    CHECK_THROWS(run_experiment(c));

    TrainConfig tc;
    tc.n_tx = 64;
    tc.n_rx = 16;
    tc.shape = NetShape{kFeatureWidth, 4, 1, 4};
    const TrainState st = initial_train_state(tc);
    ModelSet models{model_from_state(tc, st)};
    CHECK(find_model(models, 64, 16) != nullptr);
    CHECK(find_model(models, 16, 16) == nullptr);
    c.n_trials = 5;
    const ExperimentResult r = run_experiment(c, models);
    CHECK(r.records.size() == 10);
    CHECK(r.records.front().meas_count == 20);
}

TEST_CASE("calibration inside an experiment")
{
    ExperimentConfig c = small_run();
    c.n_tx = 16;
    c.strategies = {Strategy::qssr};
    c.snr_grid_db = {30};
    c.impairments = ImpairmentSettings{};
    CalibrationRunConfig cal;
    cal.epochs = 3;
    cal.monitor_size = 10;
    c.calibration = cal;
    const ExperimentResult r = run_experiment(c);
    REQUIRE(r.calibration.has_value());
    CHECK(r.calibration->trace.size() == 3);
    std::ostringstream out;
    write_calibration_trace(out, r.calibration->trace);
    CHECK(out.str().rfind(std::string(kCalibrationHeader) + "\n", 0) == 0);
}

TEST_CASE("command line exit codes")
{
    const auto cfg = temp("cli.cfg");
    const auto out = temp("cli.csv");
    std::ofstream(cfg) << "n_tx = 16\nn_rx = 8\nn_trials = 4\nsnr_grid_db = 20\nstrategies = qssr, binary\n";
    CHECK(run_cli("run --config " + cfg.string() + " --out " + out.string()) == 0);
    std::ifstream in(out);
    std::string header;
    std::getline(in, header);
    CHECK(header == kTrialHeader);
    auto summary = out;
    summary.replace_extension(".summary.csv");
    CHECK(std::filesystem::exists(summary));

    CHECK(run_cli("run --config " + temp("nope.cfg").string()) == 2);
    CHECK(run_cli("frobnicate") == 2);
    std::ofstream(cfg) << "n_tx = 48\n";
    CHECK(run_cli("run --config " + cfg.string()) == 2);
    std::ofstream(cfg) << "n_tx = 16\nstrategies = qssr_net\n";
    CHECK(run_cli("run --config " + cfg.string() + " --checkpoint " + temp("nope.ckpt").string()) == 3);
    for (const auto &p : {cfg, out, summary})
        std::filesystem::remove(p);
}
