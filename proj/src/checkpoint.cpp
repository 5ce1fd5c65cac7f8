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

#include "qssr/neural.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <type_traits>

// Text layout, one record per line:
//   QSSRNET 1
//   config <key> <value>            (every TrainConfig field)
//   shape <input> <hidden> <gru_layers> <head>
//   epochs_done <k>
//   net <tx|rx> <block count>
//   block <name> <rows> <cols> <rows*cols values, row-major>
//   adam <tx|rx> <step> <parameter count>
//   m <values>
//   v <values>
//   trace <epochs>
//   epoch <loss> <surrogate>
//   end

namespace qssr {

namespace {

constexpr const char *kMagic = "QSSRNET";
constexpr int kVersion = 1;

[[noreturn]] void corrupt(const std::filesystem::path &path, const std::string &why)
{
    throw std::runtime_error("checkpoint " + path.string() + ": " + why);
}

void write_net(std::ostream &out, const char *tag, const QssrNet &net)
{
    out << "net " << tag << ' ' << net.blocks().size() << '\n';
    for (std::size_t i = 0; i < net.blocks().size(); ++i) {
        const ParamBlock &b = net.blocks()[i];
        const auto m = net.view(net.parameters(), i);
        out << "block " << b.name << ' ' << b.rows << ' ' << b.cols;
        for (Eigen::Index r = 0; r < b.rows; ++r)
            for (Eigen::Index c = 0; c < b.cols; ++c)
                out << ' ' << m(r, c);
        out << '\n';
    }
}

void write_adam(std::ostream &out, const char *tag, const AdamState &s, Eigen::Index n)
{
    AdamState copy = s;
    if (copy.m.size() != n)
        copy.reset(n);
    out << "adam " << tag << ' ' << copy.step << ' ' << n << "\nm";
    for (Eigen::Index i = 0; i < n; ++i)
        out << ' ' << copy.m[i];
    out << "\nv";
    for (Eigen::Index i = 0; i < n; ++i)
        out << ' ' << copy.v[i];
    out << '\n';
}

class Reader {
public:
    Reader(std::istream &in, const std::filesystem::path &path) : in_(in), path_(path) {}

    std::istringstream line(const std::string &expected)
    {
        std::string text;
        if (!std::getline(in_, text))
            corrupt(path_, "unexpected end of file, expected '" + expected + "'");
        ++number_;
        std::istringstream s(text);
        std::string key;
        s >> key;
        if (key != expected)
            corrupt(path_, "line " + std::to_string(number_) + ": expected '" + expected + "', found '" + key + "'");
        return s;
    }

    template <typename T>
    T value(std::istringstream &s, const std::string &what)
    {
        T v{};
        if constexpr (std::is_floating_point_v<T>) {
            // strtod keeps subnormals that stream extraction rejects
            std::string token;
            char *end = nullptr;
            if (s >> token)
                v = std::strtod(token.c_str(), &end);
            if (token.empty() || end != token.c_str() + token.size())
                corrupt(path_, "line " + std::to_string(number_) + ": bad " + what);
        } else if (!(s >> v)) {
            corrupt(path_, "line " + std::to_string(number_) + ": bad " + what);
        }
        return v;
    }

    std::size_t number() const { return number_; }

private:
    std::istream &in_;
    const std::filesystem::path &path_;
    std::size_t number_ = 0;
};

void read_net(Reader &reader, const std::filesystem::path &path, const char *tag, QssrNet &net)
{
    auto head = reader.line("net");
    if (reader.value<std::string>(head, "net tag") != tag)
        corrupt(path, std::string("expected net ") + tag);
    if (reader.value<std::size_t>(head, "block count") != net.blocks().size())
        corrupt(path, std::string("net ") + tag + ": block count does not match the declared shape");
    for (std::size_t i = 0; i < net.blocks().size(); ++i) {
        const ParamBlock &b = net.blocks()[i];
        auto s = reader.line("block");
        const auto name = reader.value<std::string>(s, "block name");
        const auto rows = reader.value<Eigen::Index>(s, "block rows");
        const auto cols = reader.value<Eigen::Index>(s, "block cols");
        if (name != b.name || rows != b.rows || cols != b.cols)
            corrupt(path, "block " + name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                              ", expected " + b.name + " " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
        auto m = net.view(net.parameters(), i);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = reader.value<double>(s, "weight");
    }
}

void read_adam(Reader &reader, const std::filesystem::path &path, const char *tag, AdamState &state, Eigen::Index n)
{
    auto head = reader.line("adam");
    if (reader.value<std::string>(head, "adam tag") != tag)
        corrupt(path, std::string("expected adam ") + tag);
    state.reset(n);
    state.step = reader.value<std::uint64_t>(head, "adam step");
    if (reader.value<Eigen::Index>(head, "adam size") != n)
        corrupt(path, std::string("adam ") + tag + ": size does not match the network");
    auto m = reader.line("m");
    for (Eigen::Index i = 0; i < n; ++i)
        state.m[i] = reader.value<double>(m, "first moment");
    auto v = reader.line("v");
    for (Eigen::Index i = 0; i < n; ++i)
        state.v[i] = reader.value<double>(v, "second moment");
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const TrainConfig &config, const TrainState &state)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out << std::setprecision(17);
    out << kMagic << ' ' << kVersion << '\n';
    out << "config n_tx " << config.n_tx << '\n'
        << "config n_rx " << config.n_rx << '\n'
        << "config snr_min_db " << config.snr_min_db << '\n'
        << "config snr_max_db " << config.snr_max_db << '\n'
        << "config batch_size " << config.batch_size << '\n'
        << "config lr_initial " << config.lr_initial << '\n'
        << "config lr_decay " << config.lr_decay << '\n'
        << "config lr_decay_every " << config.lr_decay_every << '\n'
        << "config epochs " << config.epochs << '\n'
        << "config dataset_size " << config.dataset_size << '\n'
        << "config warmup_epochs " << config.warmup_epochs << '\n'
        << "config warmup_snr_db " << config.warmup_snr_db << '\n'
        << "config power_lr_scale " << config.power_lr_scale << '\n'
        << "config seed " << config.seed << '\n';
    const NetShape &sh = state.tx_net.shape();
    out << "shape " << sh.input_width << ' ' << sh.hidden_width << ' ' << sh.gru_layers << ' ' << sh.head_width
        << '\n';
    out << "epochs_done " << state.epochs_done << '\n';
    write_net(out, "tx", state.tx_net);
    write_net(out, "rx", state.rx_net);
    write_adam(out, "tx", state.tx_adam, state.tx_net.parameter_count());
    write_adam(out, "rx", state.rx_adam, state.rx_net.parameter_count());
    out << "trace " << state.epoch_loss.size() << '\n';
    for (std::size_t i = 0; i < state.epoch_loss.size(); ++i)
        out << "epoch " << state.epoch_loss[i] << ' '
            << (i < state.epoch_surrogate.size() ? state.epoch_surrogate[i] : state.epoch_loss[i]) << '\n';
    out << "end\n";
    out.flush();
    if (!out)
        throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    Reader reader(in, path);
    auto magic = reader.line(kMagic);
    if (reader.value<int>(magic, "version") != kVersion)
        corrupt(path, "unsupported version");

    TrainConfig config;
    auto field = [&](const char *name, auto &target) {
        auto s = reader.line("config");
        if (reader.value<std::string>(s, "config key") != name)
            corrupt(path, std::string("expected config ") + name);
        target = reader.template value<std::remove_reference_t<decltype(target)>>(s, name);
    };
    field("n_tx", config.n_tx);
    field("n_rx", config.n_rx);
    field("snr_min_db", config.snr_min_db);
    field("snr_max_db", config.snr_max_db);
    field("batch_size", config.batch_size);
    field("lr_initial", config.lr_initial);
    field("lr_decay", config.lr_decay);
    field("lr_decay_every", config.lr_decay_every);
    field("epochs", config.epochs);
    field("dataset_size", config.dataset_size);
    field("warmup_epochs", config.warmup_epochs);
    field("warmup_snr_db", config.warmup_snr_db);
    field("power_lr_scale", config.power_lr_scale);
    field("seed", config.seed);

    auto sh = reader.line("shape");
    config.shape.input_width = reader.value<std::size_t>(sh, "input width");
    config.shape.hidden_width = reader.value<std::size_t>(sh, "hidden width");
    config.shape.gru_layers = reader.value<std::size_t>(sh, "layer count");
    config.shape.head_width = reader.value<std::size_t>(sh, "head width");
    if (config.shape.input_width != kFeatureWidth)
        corrupt(path, "input width must be " + std::to_string(kFeatureWidth));
    try {
        config.validate();
    } catch (const std::invalid_argument &e) {
        corrupt(path, e.what());
    }

    Checkpoint cp{config, TrainState(config.shape)};
    auto done = reader.line("epochs_done");
    cp.state.epochs_done = reader.value<std::size_t>(done, "epochs_done");
    read_net(reader, path, "tx", cp.state.tx_net);
    read_net(reader, path, "rx", cp.state.rx_net);
    read_adam(reader, path, "tx", cp.state.tx_adam, cp.state.tx_net.parameter_count());
    read_adam(reader, path, "rx", cp.state.rx_adam, cp.state.rx_net.parameter_count());
    auto tr = reader.line("trace");
    const auto epochs = reader.value<std::size_t>(tr, "trace length");
    for (std::size_t i = 0; i < epochs; ++i) {
        auto e = reader.line("epoch");
        cp.state.epoch_loss.push_back(reader.value<double>(e, "epoch loss"));
        cp.state.epoch_surrogate.push_back(reader.value<double>(e, "epoch surrogate"));
    }
    reader.line("end");
    if (!cp.state.tx_net.parameters().allFinite() || !cp.state.rx_net.parameters().allFinite())
        corrupt(path, "non-finite weights");
    return cp;
}

} // namespace qssr
