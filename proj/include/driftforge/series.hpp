#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "driftforge/error.hpp"

namespace driftforge {

enum class SeriesOrigin { CsvFile, Synthetic };

/// A T x M observation matrix: rows are time steps, columns are channels.
struct MultivariateSeries {
    Eigen::MatrixXd values;
    std::vector<std::string> channel_names;
    SeriesOrigin origin = SeriesOrigin::Synthetic;

    Eigen::Index length() const { return values.rows(); }
    Eigen::Index channels() const { return values.cols(); }

    /// Throws ConfigError unless the invariants hold (M >= 1, names match, all finite).
    void validate() const {
        if (values.cols() < 1) throw ConfigError("series must have at least one channel");
        if (static_cast<Eigen::Index>(channel_names.size()) != values.cols())
            throw ConfigError("channel name count does not match column count");
        if (!values.allFinite()) throw ConfigError("series contains non-finite values");
    }
};

/// One round's look-back input (M x L) and forecast target (M x H).
struct WindowPair {
    Eigen::MatrixXd lookback;
    Eigen::MatrixXd target;
    long step_index = 0;
};

inline std::vector<std::string> default_channel_names(Eigen::Index m) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("ch" + std::to_string(j));
    return names;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

inline bool parse_finite(std::string_view cell, double& out) {
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace detail

/// Parses a comma-separated numeric table. With a header, a leading column named
/// "date" or "timestamp" (any case) is dropped.
inline MultivariateSeries parse_csv(std::istream& in, bool has_header) {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    bool skip_first = false;
    std::size_t arity = 0;
    std::size_t line_no = 0;
    std::string line;
    bool seen_any = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
            line.erase(0, 3);
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        auto cells = detail::split_commas(trimmed);

        if (!seen_any && has_header) {
            seen_any = true;
            const auto first = detail::lower(cells.front());
            skip_first = first == "date" || first == "timestamp";
            arity = cells.size();
            for (std::size_t c = skip_first ? 1 : 0; c < cells.size(); ++c) names.emplace_back(cells[c]);
            if (names.empty()) throw ParseError(line_no, "header declares no numeric channels");
            continue;
        }
        seen_any = true;
        if (arity == 0) arity = cells.size();
        if (cells.size() != arity)
            throw ParseError(line_no, "expected " + std::to_string(arity) + " cells, found " +
                                          std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t c = skip_first ? 1 : 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!detail::parse_finite(cells[c], v))
                throw ParseError(line_no, "non-numeric or non-finite cell '" + std::string(cells[c]) + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (!seen_any) throw ParseError(line_no == 0 ? 1 : line_no, "empty file");
    if (rows.empty()) throw ParseError(line_no, "no data rows");

    MultivariateSeries s;
    const auto m = static_cast<Eigen::Index>(rows.front().size());
    s.values.resize(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (Eigen::Index c = 0; c < m; ++c) s.values(static_cast<Eigen::Index>(r), c) = rows[r][c];
    s.channel_names = has_header ? std::move(names) : default_channel_names(m);
    s.origin = SeriesOrigin::CsvFile;
    return s;
}

inline MultivariateSeries load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open csv file: " + path);
    return parse_csv(in, has_header);
}

inline void save_csv(const MultivariateSeries& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t c = 0; c < s.channel_names.size(); ++c) out << (c ? "," : "") << s.channel_names[c];
    out << '\n';
    char buf[64];
    for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
            const auto res = std::to_chars(buf, buf + sizeof buf, s.values(r, c));
            if (c) out << ',';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline MultivariateSeries slice_rows(const MultivariateSeries& s, Eigen::Index begin, Eigen::Index count) {
    MultivariateSeries out;
    out.values = s.values.middleRows(begin, count);
    out.channel_names = s.channel_names;
    out.origin = s.origin;
    return out;
}

/// Splits off the first floor(warm_fraction * T) rows. Both parts must hold at least
/// `min_length` rows (pass L + H).
inline std::pair<MultivariateSeries, MultivariateSeries> split_warmup(const MultivariateSeries& s,
                                                                      double warm_fraction,
                                                                      Eigen::Index min_length) {
    if (!(warm_fraction > 0.0 && warm_fraction < 1.0))
        throw ConfigError("warm_fraction must lie in (0, 1)");
    const Eigen::Index t = s.length();
    const auto warm = static_cast<Eigen::Index>(std::floor(warm_fraction * static_cast<double>(t)));
    if (warm < min_length)
        throw ConfigError("warm-up split has " + std::to_string(warm) + " rows, need " + std::to_string(min_length));
    if (t - warm < min_length)
        throw ConfigError("online split has " + std::to_string(t - warm) + " rows, need " +
                          std::to_string(min_length));
    return {slice_rows(s, 0, warm), slice_rows(s, warm, t - warm)};
}

inline constexpr double kStdFloor = 1e-8;

/// Per-channel affine standardization fitted on the warm-up split only.
struct Normalizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd std;

    static Normalizer fit(const MultivariateSeries& warm) {
        if (warm.length() < 1) throw ConfigError("cannot fit normalizer on an empty series");
        Normalizer n;
        n.mean = warm.values.colwise().mean();
        n.std.resize(warm.channels());
        const double denom = warm.length() > 1 ? static_cast<double>(warm.length() - 1) : 1.0;
        for (Eigen::Index c = 0; c < warm.channels(); ++c) {
            const double ss = (warm.values.col(c).array() - n.mean(c)).square().sum();
            n.std(c) = std::max(std::sqrt(ss / denom), kStdFloor);
        }
        return n;
    }

    MultivariateSeries apply(const MultivariateSeries& s) const {
        check(s);
        MultivariateSeries out = s;
        out.values = (s.values.rowwise() - mean).array().rowwise() / std.array();
        return out;
    }

    MultivariateSeries invert(const MultivariateSeries& s) const {
        check(s);
        MultivariateSeries out = s;
        out.values = (s.values.array().rowwise() * std.array()).matrix().rowwise() + mean;
        return out;
    }

  private:
    void check(const MultivariateSeries& s) const {
        if (s.channels() != mean.size()) throw ConfigError("normalizer channel count mismatch");
    }
};

/// Look-back rows [t, t+L) and target rows [t+L, t+L+H), both laid out channel x time.
inline WindowPair window_at(const MultivariateSeries& s, Eigen::Index t, Eigen::Index lookback,
                            Eigen::Index horizon) {
    if (lookback < 1 || horizon < 1) throw ConfigError("lookback and horizon must be positive");
    if (t < 0 || t + lookback + horizon > s.length())
        throw ConfigError("window at t=" + std::to_string(t) + " exceeds series of length " +
                          std::to_string(s.length()));
    WindowPair w;
    w.lookback = s.values.middleRows(t, lookback).transpose();
    w.target = s.values.middleRows(t + lookback, horizon).transpose();
    w.step_index = static_cast<long>(t);
    return w;
}

/// Number of complete windows in a series of the given length.
inline Eigen::Index window_count(Eigen::Index length, Eigen::Index lookback, Eigen::Index horizon) {
    return std::max<Eigen::Index>(0, length - lookback - horizon + 1);
}

}  // namespace driftforge
