#pragma once

// Allometric exponents as principal-axis slopes of log-space point clouds.
//
//   N_m ~ V_m^g1     T ~ V_m^g2     N_m ~ T^g3
//
// Bivariate mode fits each pair separately; trivariate mode takes all three
// ratios from the leading eigenvector of the (log T, log N_m, log V_m)
// covariance, so g1 = g2 * g3 holds up to roundoff.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "patchscale/errors.hpp"
#include "patchscale/parallel.hpp"
#include "patchscale/patches.hpp"
#include "patchscale/random.hpp"
#include "patchscale/tail_stats.hpp"

namespace patchscale {

struct LogPoint {
    double log_duration = 0.0;  // ln T
    double log_trades = 0.0;    // ln N_m
    double log_value = 0.0;     // ln V_m
};

struct Point2 {
    double u = 0.0;
    double v = 0.0;
};

struct LogPoints {
    std::vector<LogPoint> points;
    std::size_t skipped_zero_duration = 0;
};

inline LogPoints log_points(std::span<const DirectionalPatch> patches) {
    LogPoints out;
    out.points.reserve(patches.size());
    for (const auto& p : patches) {
        if (!(p.duration > 0.0)) {
            ++out.skipped_zero_duration;
            continue;
        }
        out.points.push_back({std::log(p.duration), std::log(static_cast<double>(p.dominant_trades)),
                              std::log(p.dominant_value)});
    }
    return out;
}

enum class Pair { ValueTrades, ValueDuration, DurationTrades };  // g1, g2, g3

/// Projection onto the (u, v) plane of one allometric relation v ~ u^g.
inline std::vector<Point2> project(std::span<const LogPoint> pts, Pair pair) {
    std::vector<Point2> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        switch (pair) {
            case Pair::ValueTrades: out.push_back({p.log_value, p.log_trades}); break;
            case Pair::ValueDuration: out.push_back({p.log_value, p.log_duration}); break;
            case Pair::DurationTrades: out.push_back({p.log_duration, p.log_trades}); break;
        }
    }
    return out;
}

struct Pca2Fit {
    double slope = 0.0;
    double explained_variance = 0.0;  // lambda_1 / (lambda_1 + lambda_2)
    double mean_u = 0.0;
    double mean_v = 0.0;
};

/// Major-axis slope of a 2-D cloud from the closed-form eigenvector of its covariance.
inline Pca2Fit pca2(std::span<const Point2> pts) {
    if (pts.size() < 3) throw std::invalid_argument("pca2: needs at least 3 points");
    const double n = static_cast<double>(pts.size());
    double mu = 0, mv = 0;
    for (const auto& p : pts) {
        mu += p.u;
        mv += p.v;
    }
    mu /= n;
    mv /= n;
    double a = 0, b = 0, c = 0;
    for (const auto& p : pts) {
        const double du = p.u - mu, dv = p.v - mv;
        a += du * du;
        b += du * dv;
        c += dv * dv;
    }
    a /= n - 1;
    b /= n - 1;
    c /= n - 1;
    if (!(a + c > 0.0)) throw NumericalError("pca2: degenerate covariance (all points identical)");
    if (!(a > 0.0)) throw NumericalError("pca2: zero variance along the u axis");
    const double half_diff = 0.5 * (a - c);
    const double root = std::hypot(half_diff, b);
    const double l1 = 0.5 * (a + c) + root;
    const double l2 = std::max(0.0, 0.5 * (a + c) - root);
    double slope;
    if (a >= c) {
        // Eigenvector (l1 - c, b); l1 - c >= a - c >= 0, computed without cancellation.
        const double denom = half_diff + root;
        if (!(denom > 0.0)) throw NumericalError("pca2: leading eigenvalue is not unique");
        slope = b / denom;
    } else {
        // Eigenvector (b, l1 - a).
        if (b == 0.0) throw NumericalError("pca2: principal axis is parallel to the v axis");
        slope = (-half_diff + root) / b;
    }
    return {slope, l1 / (l1 + l2), mu, mv};
}

struct Pca3Fit {
    double g1 = 0.0;  // a_N / a_V
    double g2 = 0.0;  // a_T / a_V
    double g3 = 0.0;  // a_N / a_T
    double explained_variance = 0.0;
    std::array<double, 3> axis{};  // unit leading eigenvector (a_T, a_N, a_V), a_V > 0
    std::array<double, 3> centroid{};
};

inline Pca3Fit pca3(std::span<const LogPoint> pts) {
    if (pts.size() < 4) throw std::invalid_argument("pca3: needs at least 4 points");
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : pts) mean += Eigen::Vector3d(p.log_duration, p.log_trades, p.log_value);
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : pts) {
        const Eigen::Vector3d d = Eigen::Vector3d(p.log_duration, p.log_trades, p.log_value) - mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(pts.size() - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("pca3: eigen-decomposition failed");
    const Eigen::Vector3d lambda = solver.eigenvalues().cwiseMax(0.0);  // ascending
    const double total = lambda.sum();
    if (!(total > 0.0)) throw NumericalError("pca3: degenerate covariance (all points identical)");
    if (!(lambda(2) - lambda(1) > 1e-12 * total)) throw NumericalError("pca3: leading eigenvalue is not unique");

    Eigen::Vector3d axis = solver.eigenvectors().col(2);
    if (axis(2) < 0) axis = -axis;
    const double tol = 1e-12;
    if (std::abs(axis(2)) < tol || std::abs(axis(0)) < tol) {
        throw NumericalError("pca3: axis-degenerate configuration (leading axis orthogonal to log V or log T)");
    }
    Pca3Fit fit;
    fit.g1 = axis(1) / axis(2);
    fit.g2 = axis(0) / axis(2);
    fit.g3 = axis(1) / axis(0);
    fit.explained_variance = lambda(2) / total;
    fit.axis = {axis(0), axis(1), axis(2)};
    fit.centroid = {mean(0), mean(1), mean(2)};
    return fit;
}

/// Percentile (2.5%, 97.5%) of a sample, linear interpolation between order statistics.
inline Interval percentile_interval(std::vector<double> est) {
    std::sort(est.begin(), est.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(est.size() - 1);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(i);
        return i + 1 < est.size() ? est[i] + frac * (est[i + 1] - est[i]) : est[i];
    };
    return {q(0.025), q(0.975)};
}

/// Bootstrap over resamples with replacement; `estimator` maps a resample to D numbers.
/// Resample b uses seed derive_seed(seed, b), so results do not depend on `jobs`.
template <std::size_t D, typename P, typename Estimator>
std::array<Interval, D> bootstrap_intervals(std::span<const P> pts, Estimator&& estimator, std::size_t resamples,
                                            std::uint64_t seed, std::size_t jobs = 1) {
    if (resamples < 200) throw std::invalid_argument("bootstrap: needs at least 200 resamples");
    if (pts.empty()) throw std::invalid_argument("bootstrap: empty sample");
    std::vector<std::array<double, D>> est(resamples);
    std::vector<char> ok(resamples, 0);
    parallel_for(resamples, jobs, [&](std::size_t b) {
        Engine eng(derive_seed(seed, b));
        std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
        std::vector<P> sample(pts.size());
        for (auto& s : sample) s = pts[pick(eng)];
        try {
            est[b] = estimator(std::span<const P>(sample));
            ok[b] = 1;
        } catch (const NumericalError&) {
        } catch (const std::invalid_argument&) {
        }
    });
    const auto failures = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
    if (failures * 100 > resamples) {
        throw NumericalError("bootstrap: estimator failed on " + std::to_string(failures) + " of " +
                             std::to_string(resamples) + " resamples (degenerate data)");
    }
    std::array<Interval, D> out;
    for (std::size_t d = 0; d < D; ++d) {
        std::vector<double> col;
        col.reserve(resamples);
        for (std::size_t b = 0; b < resamples; ++b)
            if (ok[b]) col.push_back(est[b][d]);
        out[d] = percentile_interval(std::move(col));
    }
    return out;
}

enum class Estimator { Pca2Slope, Pca3G1, Pca3G2, Pca3G3 };

inline Interval bootstrap_ci(std::span<const Point2> pts, std::size_t resamples = 1000, std::uint64_t seed = 0,
                             std::size_t jobs = 1) {
    return bootstrap_intervals<1>(
        pts, [](std::span<const Point2> s) { return std::array<double, 1>{pca2(s).slope}; }, resamples, seed,
        jobs)[0];
}

inline Interval bootstrap_ci(std::span<const LogPoint> pts, Estimator which, std::size_t resamples = 1000,
                             std::uint64_t seed = 0, std::size_t jobs = 1) {
    if (which == Estimator::Pca2Slope) throw std::invalid_argument("bootstrap_ci: pca2 needs 2-D points");
    const auto all = bootstrap_intervals<3>(
        pts,
        [](std::span<const LogPoint> s) {
            const auto f = pca3(s);
            return std::array<double, 3>{f.g1, f.g2, f.g3};
        },
        resamples, seed, jobs);
    return all[which == Estimator::Pca3G1 ? 0 : which == Estimator::Pca3G2 ? 1 : 2];
}

struct AllometricFit {
    enum class Mode { Bivariate, Trivariate };
    Mode mode = Mode::Bivariate;
    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
    std::array<Interval, 3> ci95{};
    std::vector<double> explained_variance;  // bivariate: one per relation; trivariate: one
    std::size_t n_points = 0;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
};

inline AllometricFit fit_bivariate(std::span<const LogPoint> pts, std::size_t resamples, std::uint64_t seed,
                                   std::size_t jobs = 1) {
    AllometricFit fit;
    fit.mode = AllometricFit::Mode::Bivariate;
    fit.n_points = pts.size();
    fit.resamples = resamples;
    fit.seed = seed;
    const std::array<Pair, 3> pairs{Pair::ValueTrades, Pair::ValueDuration, Pair::DurationTrades};
    std::array<double*, 3> slots{&fit.g1, &fit.g2, &fit.g3};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto proj = project(pts, pairs[i]);
        const auto f = pca2(proj);
        *slots[i] = f.slope;
        fit.explained_variance.push_back(f.explained_variance);
        fit.ci95[i] = bootstrap_ci(proj, resamples, derive_seed(seed, i), jobs);
    }
    return fit;
}

inline AllometricFit fit_trivariate(std::span<const LogPoint> pts, std::size_t resamples, std::uint64_t seed,
                                    std::size_t jobs = 1) {
    const auto f = pca3(pts);
    AllometricFit fit;
    fit.mode = AllometricFit::Mode::Trivariate;
    fit.g1 = f.g1;
    fit.g2 = f.g2;
    fit.g3 = f.g3;
    fit.explained_variance = {f.explained_variance};
    fit.n_points = pts.size();
    fit.resamples = resamples;
    fit.seed = seed;
    fit.ci95 = bootstrap_intervals<3>(
        pts,
        [](std::span<const LogPoint> s) {
            const auto r = pca3(s);
            return std::array<double, 3>{r.g1, r.g2, r.g3};
        },
        resamples, derive_seed(seed, 3), jobs);
    return fit;
}

struct FirmExponents {
    std::size_t n_patches = 0;
    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
};

/// Bivariate exponents per firm; firms with fewer than `min_patches` points, or whose
/// cloud is degenerate, are left out.
inline std::map<std::string, FirmExponents> per_firm_exponents(
    const std::map<std::string, std::vector<LogPoint>>& by_firm, std::size_t min_patches = 10) {
    std::map<std::string, FirmExponents> out;
    for (const auto& [firm, pts] : by_firm) {
        if (pts.size() < min_patches) continue;
        try {
            FirmExponents fe;
            fe.n_patches = pts.size();
            fe.g1 = pca2(project(pts, Pair::ValueTrades)).slope;
            fe.g2 = pca2(project(pts, Pair::ValueDuration)).slope;
            fe.g3 = pca2(project(pts, Pair::DurationTrades)).slope;
            out.emplace(firm, fe);
        } catch (const NumericalError&) {
        } catch (const std::invalid_argument&) {
        }
    }
    return out;
}

struct Dispersion {
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

inline Dispersion dispersion(std::vector<double> xs) {
    Dispersion d;
    d.n = xs.size();
    if (xs.empty()) return d;
    std::sort(xs.begin(), xs.end());
    double s = 0;
    for (double x : xs) s += x;
    d.mean = s / static_cast<double>(xs.size());
    d.median = xs.size() % 2 ? xs[xs.size() / 2] : 0.5 * (xs[xs.size() / 2 - 1] + xs[xs.size() / 2]);
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - d.mean) * (x - d.mean);
        d.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return d;
}

}  // namespace patchscale
