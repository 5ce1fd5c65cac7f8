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

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    std::vector<std::string> checkpoints;
    bool resume = false;
    std::string channels;
};

qssr::ExperimentConfig resolve(const Options &o)
{
    qssr::ExperimentConfig c = o.config.empty() ? qssr::ExperimentConfig{} : qssr::load_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.train.seed = *o.seed;
        if (c.calibration)
            c.calibration->seed = *o.seed;
    }
    if (!o.out.empty())
        c.output = o.out;
    if (o.workers)
        c.workers = *o.workers;
    for (const std::string &p : o.checkpoints)
        c.checkpoints.emplace_back(p);
    if (!o.channels.empty()) {
        c.scenario = qssr::Scenario::imported;
        c.channels_path = o.channels;
    }
    return c;
}

// Writes to the configured output path, or stdout when none is set.
template <typename Fn>
void emit(const std::filesystem::path &path, Fn write)
{
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open output " + path.string());
    write(out);
    out.flush();
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

std::filesystem::path summary_path(const std::filesystem::path &out)
{
    if (out.empty())
        return {};
    std::filesystem::path p = out;
    p.replace_extension();
    p += ".summary.csv";
    return p;
}

void run(const Options &o)
{
    const qssr::ExperimentConfig c = resolve(o);
    const qssr::ExperimentResult r = qssr::run_experiment(c, qssr::load_models(c.checkpoints));
    emit(c.output, [&](std::ostream &s) { qssr::write_trials(s, r.records); });
    if (!c.output.empty())
        emit(summary_path(c.output), [&](std::ostream &s) { qssr::write_summary(s, r.summary); });
    else
        qssr::write_summary(std::cout, r.summary);
    if (r.calibration && !c.state_output.empty())
        qssr::save_calibration(c.state_output, r.calibration->state);
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Hierarchical super-resolution beam alignment simulator"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "master seed (overrides the config)");
        sub->add_option("--out", o.out, "output path");
        sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--checkpoint", o.checkpoints, "trained network checkpoint (repeatable)");
    };

    CLI::App *run_cmd = app.add_subcommand("run", "Monte-Carlo power-vs-SNR experiment");
    CLI::App *sweep_cmd = app.add_subcommand("sweep-antennas", "power versus number of transmit antennas");
    CLI::App *scatter_cmd = app.add_subcommand("scatter", "true versus estimated angles");
    CLI::App *train_cmd = app.add_subcommand("train", "train the transmit and receive networks");
    CLI::App *cal_cmd = app.add_subcommand("calibrate", "online impairment self-calibration");
    CLI::App *export_cmd = app.add_subcommand("export-channels", "write generated channels to a CSV file");
    CLI::App *import_cmd = app.add_subcommand("import-channels", "run an experiment on channels read from a file");
    for (CLI::App *sub : {run_cmd, sweep_cmd, scatter_cmd, train_cmd, cal_cmd, export_cmd, import_cmd})
        common(sub);
    train_cmd->add_flag("--resume", o.resume, "continue from an existing checkpoint");
    import_cmd->add_option("channels", o.channels, "channel CSV file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (run_cmd->parsed() || import_cmd->parsed()) {
            run(o);
        } else if (sweep_cmd->parsed()) {
            const qssr::ExperimentConfig c = resolve(o);
            const auto rows = qssr::run_antenna_sweep(c, qssr::load_models(c.checkpoints));
            emit(c.output, [&](std::ostream &s) { qssr::write_summary(s, rows); });
        } else if (scatter_cmd->parsed()) {
            const qssr::ExperimentConfig c = resolve(o);
            const auto rows = qssr::run_error_scatter(c, qssr::load_models(c.checkpoints));
            emit(c.output, [&](std::ostream &s) { qssr::write_scatter(s, rows); });
        } else if (train_cmd->parsed()) {
            const qssr::ExperimentConfig c = resolve(o);
            if (o.checkpoints.size() != 1)
                throw qssr::ConfigError("checkpoint", "train needs exactly one --checkpoint");
            c.validate();
            qssr::ExperimentConfig no_ckpt = c;
            no_ckpt.checkpoints.clear();
            qssr::train_command(no_ckpt, o.checkpoints.front(), o.resume, std::cout);
        } else if (cal_cmd->parsed()) {
            const qssr::ExperimentConfig c = resolve(o);
            qssr::calibrate_command(c, qssr::load_models(c.checkpoints), std::cout);
        } else if (export_cmd->parsed()) {
            const qssr::ExperimentConfig c = resolve(o);
            c.validate();
            if (c.output.empty())
                throw qssr::ConfigError("output", "export-channels needs --out");
            const auto ens = qssr::ensemble_config(c.scenario, c.n_tx, c.n_rx, c.seed);
            std::vector<qssr::PathChannel> channels;
            for (std::size_t i = 0; i < c.n_trials; ++i)
                channels.push_back(qssr::ensemble_member(ens, i));
            qssr::export_channels(c.output, channels);
        }
    } catch (const qssr::ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const qssr::ChannelFileError &e) {
        std::cerr << "channel file error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
