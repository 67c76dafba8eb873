#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "qoq/errors.hpp"
#include "qoq/series.hpp"

namespace qoq {

/// Quantile level, strictly interior.
struct QuantileLevel {
    double theta;
    explicit QuantileLevel(double t) : theta(t) {
        if (!(t > 0.0 && t < 1.0)) throw PreconditionError("quantile level must lie in (0,1)");
    }
};

/// Check (pinball) loss rho_theta(u) = u * (theta - 1{u<0}).
inline double check_loss(double u, double theta) {
    return u * (theta - (u < 0.0 ? 1.0 : 0.0));
}

enum class FitStatus { converged, degenerate };

/// One weighted quantile-regression instance. The design matrix carries the
/// intercept column explicitly.
struct WqrProblem {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd w;
    double theta = 0.5;
};

struct WqrFit {
    Eigen::VectorXd coefficients;
    double objective = 0.0;
    double ess = 0.0;  // (sum w)^2 / sum w^2
    FitStatus status = FitStatus::converged;
    bool non_unique = false;  // another vertex ties within tolerance
    int pivots = 0;
    std::string diagnostic;
};

namespace detail {

struct WqrCtx {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    const Eigen::VectorXd& w;
    double theta;
    std::vector<int> active;  // rows with non-negligible weight
    double ztol;              // |residual| below this counts as zero
};

/// One-sided derivative of the weighted objective along d, given residuals.
/// Rows at zero residual contribute their worst-case kink slope.
inline double directional_derivative(const WqrCtx& c, const Eigen::VectorXd& r, const Eigen::VectorXd& d,
                                     double* weight_scale = nullptr) {
    double g = 0.0, scale = 0.0;
    for (int t : c.active) {
        const double ct = c.X.row(t).dot(d);
        scale += c.w[t] * std::abs(ct);
        if (r[t] > c.ztol)
            g -= c.w[t] * c.theta * ct;
        else if (r[t] < -c.ztol)
            g -= c.w[t] * (c.theta - 1.0) * ct;
        else
            g += c.w[t] * check_loss(-ct, c.theta);
    }
    if (weight_scale) *weight_scale = scale;
    return g;
}

/// Piecewise-linear line search along d starting at slope s0 <= 0. Moves b
/// to the breakpoint where the slope turns nonnegative and returns the row
/// whose residual hits zero there; -1 if there is no breakpoint.
inline int line_search_move(const WqrCtx& c, Eigen::VectorXd& b, Eigen::VectorXd& r, const Eigen::VectorXd& d,
                            double s0) {
    struct Bp {
        double alpha;
        double slope_gain;
        double pick_score;
        int row;
    };
    std::vector<Bp> bps;
    bps.reserve(c.active.size());
    for (int t : c.active) {
        const double ct = c.X.row(t).dot(d);
        if (std::abs(ct) < 1e-300) continue;
        if (std::abs(r[t]) <= c.ztol) continue;  // kink already at the origin
        const double a = r[t] / ct;
        if (a <= 0.0) continue;
        bps.push_back({a, c.w[t] * std::abs(ct), std::abs(ct) * c.w[t], t});
    }
    if (bps.empty()) return -1;
    std::sort(bps.begin(), bps.end(), [](const Bp& a, const Bp& b) {
        if (a.alpha != b.alpha) return a.alpha < b.alpha;
        return a.row < b.row;
    });
    double slope = s0;
    std::size_t i = 0;
    while (i < bps.size()) {
        // group breakpoints at (numerically) the same alpha
        std::size_t j = i;
        double gain = 0.0;
        while (j < bps.size() && bps[j].alpha <= bps[i].alpha * (1.0 + 1e-13)) {
            gain += bps[j].slope_gain;
            ++j;
        }
        slope += gain;
        if (slope >= 0.0 || j == bps.size()) {
            // stop at this alpha; pick the best-conditioned row in the group
            std::size_t pick = i;
            for (std::size_t q = i + 1; q < j; ++q)
                if (bps[q].pick_score > bps[pick].pick_score) pick = q;
            const double alpha = bps[pick].alpha;
            b += alpha * d;
            for (int t : c.active) r[t] = c.y[t] - c.X.row(t).dot(b);
            r[bps[pick].row] = 0.0;
            return bps[pick].row;
        }
        i = j;
    }
    return -1;  // unreachable
}

inline Eigen::VectorXd weighted_ls(const WqrCtx& c, const Eigen::VectorXd& q) {
    const Eigen::Index k = c.X.cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (int t : c.active) {
        A.selfadjointView<Eigen::Lower>().rankUpdate(c.X.row(t).transpose(), q[t]);
        rhs += q[t] * c.y[t] * c.X.row(t).transpose();
    }
    A = A.selfadjointView<Eigen::Lower>();
    A.diagonal().array() += 1e-12 * (A.trace() / static_cast<double>(k) + 1e-30);
    return A.ldlt().solve(rhs);
}

/// A few rounds of iteratively reweighted least squares on the check loss
/// with a shrinking residual floor; cheap warm start for the exact phase.
inline Eigen::VectorXd irls_warm_start(const WqrCtx& c, Eigen::VectorXd b) {
    Eigen::VectorXd r(c.y.size()), q(c.y.size());
    q.setZero();
    for (int t : c.active) r[t] = c.y[t] - c.X.row(t).dot(b);
    std::vector<double> absr;
    absr.reserve(c.active.size());
    for (int t : c.active) absr.push_back(std::abs(r[t]));
    std::nth_element(absr.begin(), absr.begin() + absr.size() / 2, absr.end());
    double delta = std::max(absr[absr.size() / 2], 1e-12);
    for (int stage = 0; stage < 3; ++stage) {
        for (int it = 0; it < 8; ++it) {
            for (int t : c.active) {
                const double side = r[t] >= 0.0 ? c.theta : 1.0 - c.theta;
                q[t] = c.w[t] * side / std::max(std::abs(r[t]), delta);
            }
            Eigen::VectorXd bn = weighted_ls(c, q);
            const double step = (bn - b).cwiseAbs().maxCoeff();
            b = bn;
            for (int t : c.active) r[t] = c.y[t] - c.X.row(t).dot(b);
            if (step <= 1e-9 * (1.0 + b.cwiseAbs().maxCoeff())) break;
        }
        delta /= 30.0;
    }
    return b;
}

inline bool rows_independent(const Eigen::MatrixXd& basis_rows, const Eigen::RowVectorXd& x) {
    if (basis_rows.rows() == 0) return x.norm() > 0.0;
    Eigen::MatrixXd stacked(basis_rows.rows() + 1, basis_rows.cols());
    stacked << basis_rows, x;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked.transpose());
    return qr.rank() == stacked.rows();
}

}  // namespace detail

/// Minimizes sum_t w_t * rho_theta(y_t - X_t b) exactly.
///
/// Strategy: weighted-least-squares start, IRLS polish, then finite descent
/// through basic solutions (k interpolated rows) until no edge direction
/// descends. The endpoint is a vertex of the piecewise-linear objective, so
/// the optimum is attained exactly up to round-off.
inline WqrFit solve_wqr(const WqrProblem& p) {
    const Eigen::Index T = p.y.size();
    const Eigen::Index k = p.X.cols();
    if (p.X.rows() != T || p.w.size() != T) throw PreconditionError("solve_wqr: dimension mismatch");
    if (k < 1 || T < 1) throw PreconditionError("solve_wqr: empty problem");
    if (!(p.theta > 0.0 && p.theta < 1.0)) throw PreconditionError("solve_wqr: theta outside (0,1)");
    double wsum = 0.0, wsq = 0.0, wmax = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        if (!(p.w[t] >= 0.0)) throw PreconditionError("solve_wqr: negative weight");
        wsum += p.w[t];
        wsq += p.w[t] * p.w[t];
        wmax = std::max(wmax, p.w[t]);
    }
    if (!(wsum > 0.0)) throw PreconditionError("solve_wqr: all weights zero");

    WqrFit fit;
    fit.ess = wsum * wsum / wsq;

    detail::WqrCtx ctx{p.X, p.y, p.w, p.theta, {}, 0.0};
    double yscale = 1.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        if (p.w[t] > 1e-12 * wmax) {
            ctx.active.push_back(static_cast<int>(t));
            yscale = std::max(yscale, std::abs(p.y[t]));
        }
    }
    ctx.ztol = 1e-10 * yscale;

    auto finish = [&](const Eigen::VectorXd& b) {
        fit.coefficients = b;
        double obj = 0.0;
        for (Eigen::Index t = 0; t < T; ++t) obj += p.w[t] * check_loss(p.y[t] - p.X.row(t).dot(b), p.theta);
        fit.objective = obj;
        return fit;
    };

    // rank of the weighted design
    Eigen::MatrixXd Xw(static_cast<Eigen::Index>(ctx.active.size()), k);
    Eigen::VectorXd yw(static_cast<Eigen::Index>(ctx.active.size()));
    for (std::size_t i = 0; i < ctx.active.size(); ++i) {
        const double sw = std::sqrt(p.w[ctx.active[i]]);
        Xw.row(static_cast<Eigen::Index>(i)) = sw * p.X.row(ctx.active[i]);
        yw[static_cast<Eigen::Index>(i)] = sw * p.y[ctx.active[i]];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    Eigen::VectorXd b = qr.solve(yw);  // weighted least squares
    if (qr.rank() < k) {
        fit.status = FitStatus::degenerate;
        fit.diagnostic = "design rank " + std::to_string(qr.rank()) + " < " + std::to_string(k) +
                         " on the positive-weight support";
        return finish(b);
    }
    if (fit.ess < 2.0 * static_cast<double>(k)) {
        fit.status = FitStatus::degenerate;
        fit.diagnostic = "effective sample size " + std::to_string(fit.ess) + " below 2k";
        return finish(b);
    }

    b = detail::irls_warm_start(ctx, b);

    Eigen::VectorXd r = Eigen::VectorXd::Zero(T);
    for (int t : ctx.active) r[t] = p.y[t] - p.X.row(t).dot(b);

    // --- drive to a vertex: pin k rows at zero residual ---
    std::vector<int> basis;
    auto basis_matrix = [&]() {
        Eigen::MatrixXd B(static_cast<Eigen::Index>(basis.size()), k);
        for (std::size_t i = 0; i < basis.size(); ++i) B.row(static_cast<Eigen::Index>(i)) = p.X.row(basis[i]);
        return B;
    };
    auto absorb_zero_rows = [&]() {
        for (int t : ctx.active) {
            if (static_cast<Eigen::Index>(basis.size()) == k) break;
            if (std::abs(r[t]) > ctx.ztol) continue;
            if (std::find(basis.begin(), basis.end(), t) != basis.end()) continue;
            if (detail::rows_independent(basis_matrix(), p.X.row(t))) basis.push_back(t);
        }
    };
    absorb_zero_rows();
    int guard = 0;
    while (static_cast<Eigen::Index>(basis.size()) < k) {
        if (++guard > 4 * k + 16) {
            fit.status = FitStatus::degenerate;
            fit.diagnostic = "vertex construction stalled";
            return finish(b);
        }
        Eigen::MatrixXd B = basis_matrix();
        Eigen::MatrixXd kernel;
        if (basis.empty()) {
            kernel = Eigen::MatrixXd::Identity(k, k);
        } else {
            Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
            kernel = lu.kernel();
        }
        double best = 0.0;
        Eigen::VectorXd bestd;
        for (Eigen::Index j = 0; j < kernel.cols(); ++j) {
            Eigen::VectorXd v = kernel.col(j).normalized();
            for (int sgn : {+1, -1}) {
                Eigen::VectorXd d = sgn * v;
                double scale = 0.0;
                const double g = detail::directional_derivative(ctx, r, d, &scale);
                const double margin = g / std::max(scale, 1e-300);
                if (margin < best) {
                    best = margin;
                    bestd = d;
                }
            }
        }
        if (bestd.size() == 0) bestd = kernel.col(0).normalized();  // flat: walk to a breakpoint
        const double s0 = std::min(detail::directional_derivative(ctx, r, bestd), 0.0);
        const int pivot = detail::line_search_move(ctx, b, r, bestd, s0);
        if (pivot < 0) {
            fit.status = FitStatus::degenerate;
            fit.diagnostic = "no breakpoint along a kernel direction";
            return finish(b);
        }
        if (std::find(basis.begin(), basis.end(), pivot) == basis.end()) basis.push_back(pivot);
        absorb_zero_rows();
    }

    // --- exchange pivots between basic solutions ---
    const int max_pivots = 200 + 10 * static_cast<int>(ctx.active.size());
    const double descent_tol = 1e-11;
    std::set<std::vector<int>> visited;
    for (;;) {
        if (fit.pivots > max_pivots) {
            fit.status = FitStatus::degenerate;
            fit.diagnostic = "pivot limit reached";
            break;
        }
        Eigen::MatrixXd B = basis_matrix();
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        Eigen::MatrixXd Binv = lu.inverse();
        if (!Binv.allFinite()) {
            fit.status = FitStatus::degenerate;
            fit.diagnostic = "singular basis";
            break;
        }
        b = lu.solve([&] {
            Eigen::VectorXd yb(k);
            for (Eigen::Index i = 0; i < k; ++i) yb[i] = p.y[basis[static_cast<std::size_t>(i)]];
            return yb;
        }());
        for (int t : ctx.active) r[t] = p.y[t] - p.X.row(t).dot(b);
        for (int h : basis) r[h] = 0.0;

        double best = 0.0, flattest = std::numeric_limits<double>::infinity();
        int best_pos = -1, best_sgn = 0;
        for (Eigen::Index pos = 0; pos < k; ++pos) {
            for (int sgn : {+1, -1}) {
                Eigen::VectorXd d = sgn * Binv.col(pos);
                const double dn = d.norm();
                if (!(dn > 0.0) || !d.allFinite()) continue;
                d /= dn;
                double scale = 0.0;
                const double g = detail::directional_derivative(ctx, r, d, &scale);
                const double margin = g / std::max(scale, 1e-300);
                flattest = std::min(flattest, std::abs(margin));
                if (margin < best - 1e-15) {
                    best = margin;
                    best_pos = static_cast<int>(pos);
                    best_sgn = sgn;
                }
            }
        }

        if (best >= -descent_tol) {
            if (flattest <= 1e-10) fit.non_unique = true;
            // ties beyond the basis can hide a descent edge behind this
            // basis; probe neighbouring bases built from the tied rows
            std::vector<int> tied;
            for (int t : ctx.active)
                if (std::abs(r[t]) <= ctx.ztol && std::find(basis.begin(), basis.end(), t) == basis.end())
                    tied.push_back(t);
            if (!tied.empty() && visited.size() < 128) {
                std::vector<int> key = basis;
                std::sort(key.begin(), key.end());
                visited.insert(key);
                bool moved = false;
                for (std::size_t hi = 0; hi < basis.size() && !moved; ++hi) {
                    for (int z : tied) {
                        std::vector<int> cand = basis;
                        cand[hi] = z;
                        std::vector<int> ck = cand;
                        std::sort(ck.begin(), ck.end());
                        if (visited.count(ck)) continue;
                        Eigen::MatrixXd Bc(k, k);
                        for (Eigen::Index i = 0; i < k; ++i) Bc.row(i) = p.X.row(cand[static_cast<std::size_t>(i)]);
                        if (std::abs(Eigen::PartialPivLU<Eigen::MatrixXd>(Bc).determinant()) <
                            1e-12 * Bc.cwiseAbs().maxCoeff())
                            continue;
                        basis = cand;
                        moved = true;
                        break;
                    }
                }
                if (moved) {
                    ++fit.pivots;
                    continue;
                }
            }
            break;  // optimal
        }

        ++fit.pivots;
        visited.clear();
        Eigen::VectorXd d = best_sgn * Binv.col(best_pos).normalized();
        const double s0 = detail::directional_derivative(ctx, r, d);
        const int pivot = detail::line_search_move(ctx, b, r, d, std::min(s0, 0.0));
        if (pivot < 0) {
            fit.status = FitStatus::degenerate;
            fit.diagnostic = "unbounded edge (numerical)";
            break;
        }
        basis[static_cast<std::size_t>(best_pos)] = pivot;
    }

    return finish(b);
}

/// Standard (unit-weight) quantile regression of y on [1, x, y_{t-1}].
inline WqrFit fit_qr(const ReturnSeries& y, const ReturnSeries& x, bool include_lag, QuantileLevel theta) {
    if (y.size() != x.size() || y.dates != x.dates)
        throw PreconditionError("fit_qr: series are not date-aligned");
    const std::size_t T = y.size();
    if (T < 10) throw PreconditionError("fit_qr: need at least 10 observations");
    const std::size_t first = include_lag ? 1 : 0;
    const Eigen::Index rows = static_cast<Eigen::Index>(T - first);
    const Eigen::Index k = include_lag ? 3 : 2;
    WqrProblem p;
    p.theta = theta.theta;
    p.y.resize(rows);
    p.X.resize(rows, k);
    p.w = Eigen::VectorXd::Ones(rows);
    for (std::size_t t = first; t < T; ++t) {
        const Eigen::Index i = static_cast<Eigen::Index>(t - first);
        p.y[i] = y.values[t];
        p.X(i, 0) = 1.0;
        p.X(i, 1) = x.values[t];
        if (include_lag) p.X(i, 2) = y.values[t - 1];
    }
    return solve_wqr(p);
}

}  // namespace qoq
