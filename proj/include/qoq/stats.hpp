#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "qoq/errors.hpp"
#include "qoq/series.hpp"

namespace qoq {

struct DescriptiveStats {
    double mean = 0.0;
    double median = 0.0;
    double std_dev = 0.0;   // T-1 divisor
    double skewness = 0.0;  // m3 / m2^1.5, 1/n central moments
    double kurtosis = 0.0;  // m4 / m2^2, raw (normal = 3)
    std::size_t n = 0;
};

struct JarqueBeraResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

inline double sample_mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_median(std::span<const double> x) {
    std::vector<double> c(x.begin(), x.end());
    std::sort(c.begin(), c.end());
    const std::size_t n = c.size();
    return n % 2 == 1 ? c[n / 2] : 0.5 * (c[n / 2 - 1] + c[n / 2]);
}

/// Standard deviation with the T-1 divisor.
inline double sample_std_dev(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw PreconditionError("std_dev: need at least 2 observations");
    const double m = sample_mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

/// Mean/median/std plus simple moment-ratio skewness and raw kurtosis.
inline DescriptiveStats describe(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) throw PreconditionError("describe: need at least 4 observations");
    DescriptiveStats d;
    d.n = n;
    d.mean = sample_mean(x);
    d.median = sample_median(x);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double c = v - d.mean;
        m2 += c * c;
        m3 += c * c * c;
        m4 += c * c * c * c;
    }
    const double dn = static_cast<double>(n);
    d.std_dev = std::sqrt(m2 / (dn - 1.0));
    m2 /= dn;
    m3 /= dn;
    m4 /= dn;
    if (!(m2 > 0.0)) throw PreconditionError("describe: zero variance, skewness/kurtosis undefined");
    d.skewness = m3 / std::pow(m2, 1.5);
    d.kurtosis = m4 / (m2 * m2);
    return d;
}

inline DescriptiveStats describe(const ReturnSeries& x) { return describe(std::span<const double>(x.values)); }

/// JB = n/6 (S^2 + (K-3)^2/4); p from the chi-square(2) tail exp(-q/2).
inline JarqueBeraResult jarque_bera(std::span<const double> x) {
    if (x.size() < 8) throw PreconditionError("jarque_bera: need at least 8 observations");
    const DescriptiveStats d = describe(x);
    const double S = d.skewness;
    const double K = d.kurtosis;
    JarqueBeraResult r;
    r.statistic = static_cast<double>(x.size()) / 6.0 * (S * S + (K - 3.0) * (K - 3.0) / 4.0);
    r.p_value = std::exp(-r.statistic / 2.0);
    return r;
}

inline JarqueBeraResult jarque_bera(const ReturnSeries& x) {
    return jarque_bera(std::span<const double>(x.values));
}

/// First-order autocorrelation: sum (x_t - m)(x_{t-1} - m) / sum (x_t - m)^2.
inline double autocorr1(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 3) throw PreconditionError("autocorr1: need at least 3 observations");
    const double m = sample_mean(x);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        den += (x[t] - m) * (x[t] - m);
        if (t > 0) num += (x[t] - m) * (x[t - 1] - m);
    }
    if (!(den > 0.0)) throw PreconditionError("autocorr1: zero variance");
    return num / den;
}

inline double autocorr1(const ReturnSeries& x) { return autocorr1(std::span<const double>(x.values)); }

/// Pearson correlations, exact unit diagonal, symmetric by construction.
inline Eigen::MatrixXd corr_matrix(const Panel& p) {
    const Eigen::Index n = p.cols();
    const Eigen::Index T = p.rows();
    if (T < 2) throw PreconditionError("corr_matrix: need at least 2 rows");
    Eigen::MatrixXd centered = p.values.rowwise() - p.values.colwise().mean();
    Eigen::VectorXd norm(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        norm[j] = centered.col(j).norm();
        if (!(norm[j] > 0.0))
            throw PreconditionError("corr_matrix: column '" + p.ids[static_cast<std::size_t>(j)] +
                                    "' has zero variance");
    }
    Eigen::MatrixXd r(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double c = centered.col(i).dot(centered.col(j)) / (norm[i] * norm[j]);
            r(i, j) = c;
            r(j, i) = c;
        }
    }
    return r;
}

/// Empirical distribution value F_n(at) = (1/n) #\{x_k < at\}. The inequality
/// is strict, so the minimum over sample points maps to 0.
inline double empirical_cdf(std::span<const double> x, double at) {
    if (x.empty()) throw PreconditionError("empirical_cdf: empty sample");
    std::size_t below = 0;
    for (double v : x)
        if (v < at) ++below;
    return static_cast<double>(below) / static_cast<double>(x.size());
}

/// F_n evaluated at every sample point, O(n log n).
inline std::vector<double> empirical_cdf_ranks(std::span<const double> x) {
    if (x.empty()) throw PreconditionError("empirical_cdf_ranks: empty sample");
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> ranks(x.size());
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto it = std::lower_bound(sorted.begin(), sorted.end(), x[i]);
        ranks[i] = static_cast<double>(it - sorted.begin()) / n;
    }
    return ranks;
}

/// Linear-interpolation order statistic (the common spreadsheet/R default).
inline double sample_quantile(std::span<const double> x, double p) {
    if (x.empty()) throw PreconditionError("sample_quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("sample_quantile: p outside [0,1]");
    std::vector<double> c(x.begin(), x.end());
    std::sort(c.begin(), c.end());
    const double h = p * static_cast<double>(c.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= c.size()) return c.back();
    const double frac = h - static_cast<double>(lo);
    return c[lo] + frac * (c[lo + 1] - c[lo]);
}

inline double normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace qoq
