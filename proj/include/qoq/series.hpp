#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "qoq/csv.hpp"
#include "qoq/dates.hpp"
#include "qoq/errors.hpp"

namespace qoq {

/// Dated monthly observations of one variable (price or index levels).
/// Dates are strictly increasing; gaps are legal until alignment.
struct TimeSeries {
    std::string id;
    std::vector<YearMonth> dates;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Log first differences of a level series. Same layout as TimeSeries but a
/// distinct type: mixing levels and returns is a unit error.
struct ReturnSeries {
    std::string id;
    std::vector<YearMonth> dates;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Date-aligned T x n block of series sharing one month range.
struct Panel {
    std::vector<std::string> ids;
    std::vector<YearMonth> dates;
    Eigen::MatrixXd values;  // rows = months, cols = ids

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

enum class MissingPolicy {
    strict,  // any gap inside the window is an error
    ffill,   // carry the last observation forward across gaps
};

namespace detail {

inline bool is_missing_marker(std::string_view s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == ".";
}

inline double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ParseError(where + ": bad numeric value '" + s + "'");
    if (!std::isfinite(v)) throw ParseError(where + ": non-finite value '" + s + "'");
    return v;
}

}  // namespace detail

/// Loads one monthly series from a CSV file with a header row. Rows whose
/// value cell is a missing marker ("", NA, NaN, ".") are skipped; they show
/// up later as date gaps that the alignment policy decides about.
inline TimeSeries load_series(const std::filesystem::path& path, const std::string& value_column,
                              const std::string& date_column = "date") {
    csv::Table t = csv::read_file(path);
    int dc = t.column(date_column);
    int vc = t.column(value_column);
    if (dc < 0) throw ParseError(path.string() + ": no column '" + date_column + "'");
    if (vc < 0) throw ParseError(path.string() + ": no column '" + value_column + "'");

    TimeSeries s;
    s.id = value_column;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = path.string() + ":" + std::to_string(i + 2);
        if (detail::is_missing_marker(row[vc])) continue;
        YearMonth ym;
        try {
            ym = parse_year_month(row[dc]);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        s.dates.push_back(ym);
        s.values.push_back(detail::parse_double(row[vc], where));
    }
    if (s.size() == 0) throw ParseError(path.string() + ": no observations");

    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s.dates[a] < s.dates[b]; });
    TimeSeries sorted;
    sorted.id = s.id;
    sorted.dates.reserve(s.size());
    sorted.values.reserve(s.size());
    for (std::size_t i : order) {
        if (!sorted.dates.empty() && sorted.dates.back() == s.dates[i])
            throw ParseError(path.string() + ": duplicate month " + s.dates[i].str());
        sorted.dates.push_back(s.dates[i]);
        sorted.values.push_back(s.values[i]);
    }
    return sorted;
}

/// value_t = ln(level_t) - ln(level_{t-1}); output dated by the later month.
inline ReturnSeries to_log_returns(const TimeSeries& s) {
    if (s.size() < 2) throw PreconditionError("series '" + s.id + "': need at least 2 observations for returns");
    ReturnSeries r;
    r.id = s.id;
    r.dates.reserve(s.size() - 1);
    r.values.reserve(s.size() - 1);
    for (std::size_t t = 0; t < s.size(); ++t) {
        if (!(s.values[t] > 0.0))
            throw PreconditionError("series '" + s.id + "': non-positive level at " + s.dates[t].str());
        if (t > 0) {
            r.dates.push_back(s.dates[t]);
            r.values.push_back(std::log(s.values[t]) - std::log(s.values[t - 1]));
        }
    }
    return r;
}

namespace detail {

template <class S>
void fill_aligned_column(const S& s, YearMonth start, YearMonth end, MissingPolicy policy,
                         Eigen::Ref<Eigen::VectorXd> out) {
    const int t0 = start.index();
    const int tn = end.index();
    std::vector<bool> seen(static_cast<std::size_t>(tn - t0 + 1), false);
    out.setZero();
    for (std::size_t i = 0; i < s.size(); ++i) {
        int idx = s.dates[i].index();
        if (idx < t0 || idx > tn) continue;
        seen[static_cast<std::size_t>(idx - t0)] = true;
        out[idx - t0] = s.values[i];
    }
    std::string gaps;
    int ngaps = 0;
    for (int j = 0; j <= tn - t0; ++j) {
        if (seen[static_cast<std::size_t>(j)]) continue;
        if (policy == MissingPolicy::ffill && j > 0) {
            out[j] = out[j - 1];
            continue;
        }
        if (++ngaps <= 8) {
            if (!gaps.empty()) gaps += ", ";
            gaps += YearMonth::from_index(t0 + j).str();
        }
    }
    if (ngaps > 0) {
        if (ngaps > 8) gaps += ", ...";
        throw PreconditionError("series '" + s.id + "': missing " + std::to_string(ngaps) +
                                " month(s) in window: " + gaps);
    }
}

}  // namespace detail

/// Aligns series onto the common window [start, end]. Under the strict
/// policy any missing month is an error; ffill carries the last value
/// forward (a leading gap still errors: nothing to carry).
template <class S>
Panel align_panel(std::span<const S> series, YearMonth start, YearMonth end,
                  MissingPolicy policy = MissingPolicy::strict) {
    if (series.empty()) throw PreconditionError("align_panel: no series given");
    if (end < start) throw PreconditionError("align_panel: window end precedes start");
    const int T = month_count(start, end);
    Panel p;
    p.values.resize(T, static_cast<Eigen::Index>(series.size()));
    for (std::size_t j = 0; j < series.size(); ++j) {
        p.ids.push_back(series[j].id);
        detail::fill_aligned_column(series[j], start, end, policy, p.values.col(static_cast<Eigen::Index>(j)));
    }
    p.dates.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) p.dates.push_back(YearMonth::from_index(start.index() + t));
    return p;
}

template <class S>
Panel align_panel(const std::vector<S>& series, YearMonth start, YearMonth end,
                  MissingPolicy policy = MissingPolicy::strict) {
    return align_panel(std::span<const S>(series), start, end, policy);
}

/// Column z-scores with the T-1 standard deviation divisor.
inline Panel standardize(const Panel& p) {
    const Eigen::Index T = p.rows();
    if (T < 2) throw PreconditionError("standardize: need at least 2 rows");
    Panel out = p;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        const double mean = p.values.col(j).mean();
        const double ss = (p.values.col(j).array() - mean).square().sum();
        const double sd = std::sqrt(ss / static_cast<double>(T - 1));
        if (!(sd > 0.0))
            throw PreconditionError("standardize: column '" + p.ids[static_cast<std::size_t>(j)] +
                                    "' has zero variance");
        out.values.col(j) = (p.values.col(j).array() - mean) / sd;
    }
    return out;
}

/// Factor-model input: ln of each positive level, then z-scored per column.
inline Panel dfm_input_transform(const Panel& levels) {
    Panel logs = levels;
    for (Eigen::Index j = 0; j < levels.cols(); ++j) {
        for (Eigen::Index t = 0; t < levels.rows(); ++t) {
            const double v = levels.values(t, j);
            if (!(v > 0.0))
                throw PreconditionError("dfm_input_transform: non-positive level in column '" +
                                        levels.ids[static_cast<std::size_t>(j)] + "' at " +
                                        levels.dates[static_cast<std::size_t>(t)].str());
            logs.values(t, j) = std::log(v);
        }
    }
    return standardize(logs);
}

/// Panel cache emission: first column `date` (YYYY-MM), then one column per
/// id, values at 12 significant digits.
inline void write_panel_csv(const Panel& p, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "date";
    for (const auto& id : p.ids) out << ',' << id;
    out << '\n';
    char buf[40];
    for (Eigen::Index t = 0; t < p.rows(); ++t) {
        out << p.dates[static_cast<std::size_t>(t)].str();
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.12g", p.values(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace qoq
