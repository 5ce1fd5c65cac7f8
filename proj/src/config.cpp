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

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace qssr {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string &value)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

template <typename T>
T parse_number(const std::string &key, const std::string &text)
{
    T v{};
    const char *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(key, "cannot parse '" + text + "' as a number");
    return v;
}

bool parse_bool(const std::string &key, const std::string &text)
{
    if (text == "true" || text == "on" || text == "yes" || text == "1")
        return true;
    if (text == "false" || text == "off" || text == "no" || text == "0")
        return false;
    throw ConfigError(key, "expected true or false, got '" + text + "'");
}

Scenario parse_scenario(const std::string &text)
{
    if (text == "los")
        return Scenario::los;
    if (text == "nlos")
        return Scenario::nlos;
    if (text == "single_path")
        return Scenario::single_path;
    if (text == "imported")
        return Scenario::imported;
    throw ConfigError("scenario", "unknown scenario '" + text + "' (los, nlos, single_path, imported)");
}

} // namespace

std::string_view scenario_name(Scenario s)
{
    switch (s) {
    case Scenario::los: return "los";
    case Scenario::nlos: return "nlos";
    case Scenario::single_path: return "single_path";
    case Scenario::imported: return "imported";
    }
    return "unknown";
}

ExperimentConfig parse_config(std::istream &in)
{
    ExperimentConfig c;
    ImpairmentSettings imp;
    bool imp_enabled = false;
    CalibrationRunConfig cal;
    bool cal_enabled = false;
    bool train_seed_set = false;
    bool cal_seed_set = false;

    using Setter = std::function<void(const std::string &key, const std::string &value)>;
    const auto size = [](std::size_t &target) {
        return Setter([&target](const std::string &k, const std::string &v) { target = parse_number<std::size_t>(k, v); });
    };
    const auto real = [](double &target) {
        return Setter([&target](const std::string &k, const std::string &v) { target = parse_number<double>(k, v); });
    };
    const auto u64 = [](std::uint64_t &target) {
        return Setter([&target](const std::string &k, const std::string &v) { target = parse_number<std::uint64_t>(k, v); });
    };
    const auto flag = [](bool &target) {
        return Setter([&target](const std::string &k, const std::string &v) { target = parse_bool(k, v); });
    };
    const auto path = [](std::filesystem::path &target) {
        return Setter([&target](const std::string &, const std::string &v) { target = v; });
    };

    const std::map<std::string, Setter> setters{
        {"scenario", [&](const std::string &, const std::string &v) { c.scenario = parse_scenario(v); }},
        {"strategies",
         [&](const std::string &k, const std::string &v) {
             c.strategies.clear();
             for (const std::string &name : split_list(v)) {
                 try {
                     c.strategies.push_back(parse_strategy(name));
                 } catch (const std::invalid_argument &e) {
                     throw ConfigError(k, e.what());
                 }
             }
         }},
        {"n_tx", size(c.n_tx)},
        {"n_rx", size(c.n_rx)},
        {"n_tx_list",
         [&](const std::string &k, const std::string &v) {
             c.n_tx_list.clear();
             for (const std::string &item : split_list(v))
                 c.n_tx_list.push_back(parse_number<std::size_t>(k, item));
         }},
        {"snr_grid_db",
         [&](const std::string &k, const std::string &v) {
             c.snr_grid_db.clear();
             for (const std::string &item : split_list(v))
                 c.snr_grid_db.push_back(parse_number<double>(k, item));
         }},
        {"n_trials", size(c.n_trials)},
        {"seed", u64(c.seed)},
        {"workers", size(c.workers)},
        {"channels_path", path(c.channels_path)},
        {"checkpoints",
         [&](const std::string &, const std::string &v) {
             c.checkpoints.clear();
             for (const std::string &item : split_list(v))
                 c.checkpoints.emplace_back(item);
         }},
        {"output", path(c.output)},
        {"impairment.enabled", flag(imp_enabled)},
        {"impairment.sigma_d_wavelengths", real(imp.sigma_d_wavelengths)},
        {"impairment.sigma_p_radians", real(imp.sigma_p_radians)},
        {"impairment.truncated", flag(imp.truncated)},
        {"impairment.seed", u64(imp.seed)},
        {"calibration.enabled", flag(cal_enabled)},
        {"calibration.epochs", size(cal.epochs)},
        {"calibration.step_size", real(cal.step_size)},
        {"calibration.alignments_per_epoch", size(cal.alignments_per_epoch)},
        {"calibration.period", size(cal.period)},
        {"calibration.snr_db", real(cal.snr_db)},
        {"calibration.monitor_size", size(cal.monitor_size)},
        {"calibration.seed",
         [&](const std::string &k, const std::string &v) {
             cal.seed = parse_number<std::uint64_t>(k, v);
             cal_seed_set = true;
         }},
        {"calibration.state_output", path(c.state_output)},
        {"train.snr_min_db", real(c.train.snr_min_db)},
        {"train.snr_max_db", real(c.train.snr_max_db)},
        {"train.batch_size", size(c.train.batch_size)},
        {"train.lr_initial", real(c.train.lr_initial)},
        {"train.lr_decay", real(c.train.lr_decay)},
        {"train.lr_decay_every", size(c.train.lr_decay_every)},
        {"train.epochs", size(c.train.epochs)},
        {"train.dataset_size", size(c.train.dataset_size)},
        {"train.warmup_epochs", size(c.train.warmup_epochs)},
        {"train.warmup_snr_db", real(c.train.warmup_snr_db)},
        {"train.power_lr_scale", real(c.train.power_lr_scale)},
        {"train.seed",
         [&](const std::string &k, const std::string &v) {
             c.train.seed = parse_number<std::uint64_t>(k, v);
             train_seed_set = true;
         }},
        {"train.hidden_width", size(c.train.shape.hidden_width)},
        {"train.gru_layers", size(c.train.shape.gru_layers)},
        {"train.head_width", size(c.train.shape.head_width)},
    };

    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        const std::string text = trim(line);
        if (text.empty())
            continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", "line " + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError(key, "unknown key (line " + std::to_string(number) + ")");
        if (value.empty())
            throw ConfigError(key, "empty value (line " + std::to_string(number) + ")");
        it->second(key, value);
    }
    if (imp_enabled)
        c.impairments = imp;
    if (cal_enabled) {
        if (!cal_seed_set)
            cal.seed = c.seed;
        c.calibration = cal;
    }
    if (!train_seed_set)
        c.train.seed = c.seed;
    c.train.n_tx = c.n_tx;
    c.train.n_rx = c.n_rx;
    return c;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("", "cannot open config file " + path.string());
    return parse_config(in);
}

void ExperimentConfig::validate() const
{
    const auto check_array = [](const char *field, std::size_t n) {
        if (n < 2 || !is_power_of_two(n))
            throw ConfigError(field, "must be a power of two >= 2, got " + std::to_string(n));
    };
    check_array("n_tx", n_tx);
    check_array("n_rx", n_rx);
    for (std::size_t i = 0; i < n_tx_list.size(); ++i)
        check_array(("n_tx_list[" + std::to_string(i) + "]").c_str(), n_tx_list[i]);
    if (n_trials < 1)
        throw ConfigError("n_trials", "must be >= 1");
    if (snr_grid_db.empty())
        throw ConfigError("snr_grid_db", "must not be empty");
    for (std::size_t i = 0; i < snr_grid_db.size(); ++i)
        if (!std::isfinite(snr_grid_db[i]))
            throw ConfigError("snr_grid_db[" + std::to_string(i) + "]", "must be finite");
    if (strategies.empty())
        throw ConfigError("strategies", "must not be empty");
    if (workers < 1)
        throw ConfigError("workers", "must be >= 1");
    if (scenario == Scenario::imported) {
        if (channels_path.empty())
            throw ConfigError("channels_path", "required for the imported scenario");
        for (Strategy s : strategies)
            if (s == Strategy::oracle)
                throw ConfigError("strategies", "oracle needs path metadata, which imported channels lack");
        if (impairments)
            throw ConfigError("impairment.enabled", "impairments need path metadata, which imported channels lack");
    }
    if (impairments) {
        if (!(impairments->sigma_d_wavelengths >= 0.0))
            throw ConfigError("impairment.sigma_d_wavelengths", "must be >= 0");
        if (!(impairments->sigma_p_radians >= 0.0))
            throw ConfigError("impairment.sigma_p_radians", "must be >= 0");
    }
    if (calibration) {
        if (!impairments)
            throw ConfigError("calibration.enabled", "calibration requires impairment.enabled = true");
        try {
            calibration->validate();
        } catch (const std::invalid_argument &e) {
            std::string what = e.what();
            const std::string prefix = "CalibrationRunConfig.";
            if (what.rfind(prefix, 0) == 0)
                what = "calibration." + what.substr(prefix.size());
            throw ConfigError(what.substr(0, what.find(':')), what.substr(what.find(':') + 2));
        }
    }
    try {
        train.validate();
    } catch (const std::invalid_argument &e) {
        std::string what = e.what();
        const std::string prefix = "TrainConfig.";
        if (what.rfind(prefix, 0) == 0)
            what = "train." + what.substr(prefix.size());
        throw ConfigError(what.substr(0, what.find(':')), what.substr(what.find(':') + 2));
    }
}

} // namespace qssr
