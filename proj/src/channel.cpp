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

#include "qssr/channel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace qssr {

const PathParams &PathChannel::dominant() const
{
    if (paths.empty())
        throw std::logic_error("channel carries no path metadata");
    return paths.front();
}

ChannelEnsembleConfig ChannelEnsembleConfig::los(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed)
{
    return {n_tx, n_rx, 3, 1.0, 0.01, seed};
}

ChannelEnsembleConfig ChannelEnsembleConfig::nlos(std::size_t n_tx, std::size_t n_rx, std::uint64_t seed)
{
    return {n_tx, n_rx, 8, 1.0, 1.0, seed};
}

ChannelEnsembleConfig ChannelEnsembleConfig::single_path(std::size_t n_tx, std::size_t n_rx,
                                                         std::uint64_t seed)
{
    return {n_tx, n_rx, 1, 1.0, 0.0, seed};
}

void ChannelEnsembleConfig::validate() const
{
    if (n_tx < 1 || n_rx < 1)
        throw std::invalid_argument("channel: array sizes must be >= 1");
    if (n_paths < 1)
        throw std::invalid_argument("channel: n_paths must be >= 1");
    if (!(dominant_gain_variance > 0.0) || secondary_gain_variance < 0.0)
        throw std::invalid_argument("channel: gain variances must be non-negative (dominant > 0)");
}

CMatrix compose_paths(const std::vector<PathParams> &paths, std::size_t n_rx, std::size_t n_tx)
{
    CMatrix h = CMatrix::Zero(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(n_tx));
    for (const auto &path : paths)
        h.noalias() += path.gain * steering(n_rx, path.aoa) * steering(n_tx, path.aod).adjoint();
    return h;
}

namespace {

std::vector<PathParams> draw_paths(const ChannelEnsembleConfig &config, Rng &rng)
{
    config.validate();
    std::vector<PathParams> paths(config.n_paths);
    for (std::size_t l = 0; l < config.n_paths; ++l) {
        const double variance = l == 0 ? config.dominant_gain_variance : config.secondary_gain_variance;
        paths[l].gain = rng.complex_normal(variance);
        paths[l].aoa = NormalizedAngle(rng.uniform(-1.0, 1.0));
        paths[l].aod = NormalizedAngle(rng.uniform(-1.0, 1.0));
    }
    std::stable_sort(paths.begin(), paths.end(), [](const PathParams &a, const PathParams &b) {
        return std::abs(a.gain) > std::abs(b.gain);
    });
    return paths;
}

} // namespace

CMatrix generate_unnormalized_matrix(const ChannelEnsembleConfig &config, Rng &rng)
{
    return compose_paths(draw_paths(config, rng), config.n_rx, config.n_tx);
}

PathChannel generate_channel(const ChannelEnsembleConfig &config, Rng &rng)
{
    PathChannel channel;
    channel.n_tx = config.n_tx;
    channel.n_rx = config.n_rx;
    channel.paths = draw_paths(config, rng);
    const double norm = compose_paths(channel.paths, config.n_rx, config.n_tx).norm();
    if (!(norm > 0.0))
        throw std::runtime_error("channel: degenerate draw with zero norm");
    for (auto &path : channel.paths)
        path.gain /= norm;
    channel.matrix = compose_paths(channel.paths, config.n_rx, config.n_tx);
    return channel;
}

PathChannel generate_los_channel(const ChannelEnsembleConfig &config, Rng &rng)
{
    return generate_channel(config, rng);
}

PathChannel generate_nlos_channel(const ChannelEnsembleConfig &config, Rng &rng)
{
    return generate_channel(config, rng);
}

PathChannel ensemble_member(const ChannelEnsembleConfig &config, std::uint64_t index)
{
    Rng rng = Rng(config.seed).substream(stream_key(0xC4A77E1ULL, index));
    return generate_channel(config, rng);
}

Measurement measure(const CMatrix &channel, const CVector &tx_vector, const CVector &rx_vector,
                    double noise_std, Rng &rng)
{
    if (tx_vector.size() != channel.cols() || rx_vector.size() != channel.rows())
        throw std::invalid_argument("measure: beamformer length does not match channel dimensions");
    Complex y = rx_vector.dot(channel * tx_vector); // dot() conjugates the left operand
    if (noise_std > 0.0) {
        const double variance = noise_std * noise_std;
        Complex wn(0.0, 0.0);
        for (Eigen::Index m = 0; m < rx_vector.size(); ++m)
            wn += std::conj(rx_vector[m]) * rng.complex_normal(variance);
        y += wn;
    }
    return {y, std::norm(y)};
}

double noise_std_for_snr_db(double snr_db)
{
    return std::sqrt(std::pow(10.0, -snr_db / 10.0));
}

ChannelFileError::ChannelFileError(const std::string &what, std::size_t line)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
{
}

namespace {

std::string format_entry(Complex z)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g%+.17gj", z.real(), z.imag());
    return buf;
}

bool parse_double(std::string_view text, double &out)
{
    if (!text.empty() && text.front() == '+')
        text.remove_prefix(1);
    const auto *end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

Complex parse_entry(std::string_view text, std::size_t line)
{
    text = trim(text);
    if (text.size() < 2 || text.back() != 'j')
        throw ChannelFileError("entry '" + std::string(text) + "' is not of the form re+imj", line);
    text.remove_suffix(1);
    // The imaginary part starts at the last sign that is not an exponent sign.
    std::size_t split = std::string_view::npos;
    for (std::size_t i = text.size(); i-- > 1;) {
        if ((text[i] == '+' || text[i] == '-') && text[i - 1] != 'e' && text[i - 1] != 'E') {
            split = i;
            break;
        }
    }
    double re = 0.0, im = 0.0;
    if (split == std::string_view::npos || !parse_double(text.substr(0, split), re) ||
        !parse_double(text.substr(split), im))
        throw ChannelFileError("entry '" + std::string(text) + "j' is not of the form re+imj", line);
    return {re, im};
}

std::vector<std::string_view> split_commas(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(',', start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

std::size_t parse_count(std::string_view text, const char *field, std::size_t line)
{
    text = trim(text);
    std::size_t value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || value == 0)
        throw ChannelFileError(std::string("header field ") + field + " must be a positive integer", line);
    return value;
}

} // namespace

void write_channels(std::ostream &out, const std::vector<PathChannel> &channels)
{
    if (channels.empty())
        throw std::invalid_argument("write_channels: empty ensemble");
    const std::size_t n_rx = channels.front().n_rx;
    const std::size_t n_tx = channels.front().n_tx;
    out << n_rx << ',' << n_tx << ',' << channels.size() << '\n';
    for (const auto &ch : channels) {
        if (ch.n_rx != n_rx || ch.n_tx != n_tx)
            throw std::invalid_argument("write_channels: channels differ in dimensions");
        for (std::size_t r = 0; r < n_rx; ++r) {
            for (std::size_t t = 0; t < n_tx; ++t) {
                if (t)
                    out << ',';
                out << format_entry(ch.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)));
            }
            out << '\n';
        }
    }
}

void export_channels(const std::filesystem::path &path, const std::vector<PathChannel> &channels)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_channels(out, channels);
    if (!out)
        throw std::runtime_error("write to " + path.string() + " failed");
}

std::vector<PathChannel> read_channels(std::istream &in)
{
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!trim(line).empty())
                return true;
        }
        return false;
    };
    if (!next_line())
        throw ChannelFileError("empty channel file", line_no == 0 ? 1 : line_no);
    const auto header = split_commas(line);
    if (header.size() != 3)
        throw ChannelFileError("header must be n_rx,n_tx,count", line_no);
    const std::size_t n_rx = parse_count(header[0], "n_rx", line_no);
    const std::size_t n_tx = parse_count(header[1], "n_tx", line_no);
    const std::size_t count = parse_count(header[2], "count", line_no);

    std::vector<PathChannel> channels;
    channels.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        PathChannel ch;
        ch.n_rx = n_rx;
        ch.n_tx = n_tx;
        ch.matrix.resize(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(n_tx));
        for (std::size_t r = 0; r < n_rx; ++r) {
            if (!next_line())
                throw ChannelFileError("expected " + std::to_string(count * n_rx) +
                                           " matrix rows, file ended after " +
                                           std::to_string(c * n_rx + r),
                                       line_no + 1);
            const auto fields = split_commas(line);
            if (fields.size() != n_tx)
                throw ChannelFileError("expected " + std::to_string(n_tx) + " entries, found " +
                                           std::to_string(fields.size()),
                                       line_no);
            for (std::size_t t = 0; t < n_tx; ++t)
                ch.matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) =
                    parse_entry(fields[t], line_no);
        }
        const double norm = ch.matrix.norm();
        if (!(norm > 0.0) || !std::isfinite(norm))
            throw ChannelFileError("channel " + std::to_string(c) + " has zero or non-finite norm", line_no);
        ch.matrix /= norm;
        channels.push_back(std::move(ch));
    }
    if (next_line())
        throw ChannelFileError("trailing rows beyond the " + std::to_string(count) +
                                   " channels declared in the header",
                               line_no);
    return channels;
}

std::vector<PathChannel> import_channels(const std::filesystem::path &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return read_channels(in);
}

} // namespace qssr
