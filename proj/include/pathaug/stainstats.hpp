#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pathaug/colorspace.hpp"
#include "pathaug/error.hpp"
#include "pathaug/raster.hpp"
#include "pathaug/rng.hpp"

namespace pathaug {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Per-image channel means and population standard deviations in one space.
struct ChannelStats {
    ColorSpace space = ColorSpace::HSV;
    std::array<double, 3> mu{};
    std::array<double, 3> sigma{};

    /// (mu1, mu2, mu3, sigma1, sigma2, sigma3)
    Vec6 as_vector() const
    {
        Vec6 v;
        v << mu[0], mu[1], mu[2], sigma[0], sigma[1], sigma[2];
        return v;
    }

    static ChannelStats from_vector(ColorSpace space, const Vec6& v)
    {
        return ChannelStats{space, {v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
    }

    friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

inline ChannelStats plane_stats(const FloatPlanes& planes)
{
    ChannelStats s;
    s.space = planes.space;
    const auto n = static_cast<double>(planes.size());
    for (std::size_t c = 0; c < 3; ++c) {
        const auto& p = planes.planes[c];
        const double origin = p[0];
        double sum = 0.0;
        for (double v : p) sum += v - origin;
        const double offset = sum / n;
        double ss = 0.0;
        for (double v : p) ss += (v - origin - offset) * (v - origin - offset);
        const double mean = origin + offset;
        s.mu[c] = mean;
        s.sigma[c] = std::sqrt(ss / n);
    }
    return s;
}

inline ChannelStats image_stats(const RasterImage& image, ColorSpace space,
                                const StainMatrix& matrix = StainMatrix::standard())
{
    return plane_stats(to_planes(image, space, matrix));
}

// ---------------------------------------------------------------------------
// Unimodal model: one independent Gaussian per statistic.

struct UnimodalStainModel {
    ColorSpace space = ColorSpace::HSV;
    std::array<double, 6> mean{};
    std::array<double, 6> std{};

    friend bool operator==(const UnimodalStainModel&, const UnimodalStainModel&) = default;
};

namespace detail {

inline void require_entries_in_space(std::span<const ChannelStats> stats, ColorSpace space)
{
    for (const auto& s : stats)
        if (s.space != space)
            throw Error(ErrorCode::SpaceMismatch, "statistics entry in " + std::string(to_string(s.space)) +
                                                      " while fitting " + std::string(to_string(space)));
}

} // namespace detail

/// Sample mean and sample (N-1) standard deviation of each statistic across images.
inline UnimodalStainModel fit_unimodal(std::span<const ChannelStats> stats, ColorSpace space)
{
    if (stats.size() < 2)
        throw Error(ErrorCode::InsufficientData, "unimodal fit needs at least 2 images, got " +
                                                     std::to_string(stats.size()));
    detail::require_entries_in_space(stats, space);

    UnimodalStainModel model;
    model.space = space;
    const auto n = static_cast<double>(stats.size());
    for (int v = 0; v < 6; ++v) {
        // Shifted by the first entry so identical inputs give exactly zero spread.
        const double origin = stats[0].as_vector()[v];
        double sum = 0.0;
        for (const auto& s : stats) sum += s.as_vector()[v] - origin;
        const double offset = sum / n;
        const double mean = origin + offset;
        double ss = 0.0;
        for (const auto& s : stats) {
            const double d = s.as_vector()[v] - origin - offset;
            ss += d * d;
        }
        model.mean[v] = mean;
        model.std[v] = std::sqrt(ss / (n - 1.0));
    }
    return model;
}

// ---------------------------------------------------------------------------
// Full-covariance Gaussian mixture over the 6 statistics.

struct GmmStainModel {
    ColorSpace space = ColorSpace::HSV;
    std::vector<double> weights;
    std::vector<Vec6> means;
    std::vector<Mat6> covariances;

    int k() const noexcept { return static_cast<int>(weights.size()); }

    friend bool operator==(const GmmStainModel& a, const GmmStainModel& b)
    {
        if (a.space != b.space || a.weights != b.weights || a.means.size() != b.means.size() ||
            a.covariances.size() != b.covariances.size())
            return false;
        for (std::size_t i = 0; i < a.means.size(); ++i)
            if (a.means[i] != b.means[i] || a.covariances[i] != b.covariances[i]) return false;
        return true;
    }
};

struct GmmOptions {
    int k = 10;
    std::uint64_t seed = 0;
    int max_iter = 200;
    double tol = 1e-4;       ///< stop when mean log-likelihood improves by less than this
    double reg_floor = 1e-6; ///< added to every covariance diagonal
    int kmeans_iter = 10;
};

/// Mean per-point log-likelihood: entry 0 is the initialization, then one per EM iteration.
struct GmmFitTrace {
    std::vector<double> log_likelihood;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double squared_distance(const Vec6& a, const Vec6& b) { return (a - b).squaredNorm(); }

/// k-means++ seeding followed by Lloyd iterations. Returns the cluster label of every point.
inline std::vector<int> kmeans_labels(std::span<const Vec6> points, int k, int lloyd_iter, Rng& rng,
                                      std::vector<Vec6>& centers)
{
    const std::size_t n = points.size();
    centers.clear();
    centers.push_back(points[rng.below(n)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centers[0]);

    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick = n - 1;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
    }

    std::vector<int> labels(n, 0);
    auto assign = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(points[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(points[i], centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
        }
    };

    assign();
    for (int it = 0; it < lloyd_iter; ++it) {
        std::vector<Vec6> sums(static_cast<std::size_t>(k), Vec6::Zero());
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[labels[i]] += points[i];
            ++counts[labels[i]];
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
        assign();
    }
    return labels;
}

inline Mat6 population_covariance(std::span<const Vec6> points, const Vec6& mean)
{
    Mat6 cov = Mat6::Zero();
    for (const auto& p : points) {
        const Vec6 d = p - mean;
        cov.noalias() += d * d.transpose();
    }
    return cov / static_cast<double>(points.size());
}

struct ComponentFactor {
    Eigen::Matrix<double, 6, 6> lower;
    double log_norm; // log(weight) - 0.5*(d*log(2pi) + logdet)
};

inline std::vector<ComponentFactor> factorize(const GmmStainModel& model)
{
    std::vector<ComponentFactor> out;
    out.reserve(model.weights.size());
    for (int c = 0; c < model.k(); ++c) {
        Eigen::LLT<Mat6> llt(model.covariances[c]);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorCode::DegenerateComponent,
                        "component " + std::to_string(c) + " covariance is not positive definite");
        const Mat6 lower = llt.matrixL();
        double logdet = 0.0;
        for (int i = 0; i < 6; ++i) logdet += 2.0 * std::log(lower(i, i));
        const double log_w = model.weights[c] > 0.0 ? std::log(model.weights[c])
                                                    : -std::numeric_limits<double>::infinity();
        out.push_back({lower, log_w - 0.5 * (6.0 * std::log(2.0 * std::numbers::pi) + logdet)});
    }
    return out;
}

/// Fills responsibilities (n x k, row-major) and returns the mean log-likelihood.
inline double expectation(std::span<const Vec6> points, const GmmStainModel& model,
                          std::vector<double>& responsibilities)
{
    const auto factors = factorize(model);
    const std::size_t n = points.size();
    const auto k = static_cast<std::size_t>(model.k());
    responsibilities.assign(n * k, 0.0);
    std::vector<double> logp(k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (std::isinf(factors[c].log_norm)) {
                logp[c] = factors[c].log_norm;
                continue;
            }
            const Vec6 z = factors[c].lower.triangularView<Eigen::Lower>().solve(points[i] - model.means[c]);
            logp[c] = factors[c].log_norm - 0.5 * z.squaredNorm();
            best = std::max(best, logp[c]);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(logp[c] - best);
        const double lse = best + std::log(sum);
        total += lse;
        for (std::size_t c = 0; c < k; ++c) responsibilities[i * k + c] = std::exp(logp[c] - lse);
    }
    return total / static_cast<double>(n);
}

inline void maximization(std::span<const Vec6> points, const std::vector<double>& responsibilities,
                         double reg_floor, GmmStainModel& model)
{
    const std::size_t n = points.size();
    const auto k = static_cast<std::size_t>(model.k());
    const Mat6 reg = reg_floor * Mat6::Identity();
    double weight_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double nk = 0.0;
        Vec6 sum = Vec6::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const double r = responsibilities[i * k + c];
            nk += r;
            sum += r * points[i];
        }
        model.weights[c] = nk / static_cast<double>(n);
        weight_sum += model.weights[c];
        // A component with no mass keeps its previous parameters.
        if (nk <= 1e-12 * static_cast<double>(n)) continue;
        const Vec6 mean = sum / nk;
        Mat6 cov = Mat6::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            const double r = responsibilities[i * k + c];
            if (r == 0.0) continue;
            const Vec6 d = points[i] - mean;
            cov.noalias() += r * (d * d.transpose());
        }
        cov /= nk;
        cov = 0.5 * (cov + cov.transpose()) + reg;
        model.means[c] = mean;
        model.covariances[c] = cov;
    }
    for (auto& w : model.weights) w /= weight_sum;
}

} // namespace detail

/// EM for a full-covariance mixture on raw 6-d points.
///
/// Initialization: k-means++ seeding and `kmeans_iter` Lloyd passes; each
/// component starts from its cluster's population covariance (the global one
/// for clusters with fewer than two members) plus reg_floor*I and a weight
/// proportional to max(cluster size, 1).
inline GmmStainModel fit_gmm_points(std::span<const Vec6> points, ColorSpace space, const GmmOptions& options,
                                    GmmFitTrace* trace = nullptr)
{
    if (options.k < 1) throw Error(ErrorCode::InsufficientData, "k must be >= 1");
    if (points.size() < static_cast<std::size_t>(options.k))
        throw Error(ErrorCode::InsufficientData, "GMM with k=" + std::to_string(options.k) + " needs at least " +
                                                     std::to_string(options.k) + " points, got " +
                                                     std::to_string(points.size()));

    const int k = options.k;
    Rng rng(options.seed);
    std::vector<Vec6> centers;
    const auto labels = detail::kmeans_labels(points, k, options.kmeans_iter, rng, centers);

    Vec6 global_mean = Vec6::Zero();
    for (const auto& p : points) global_mean += p;
    global_mean /= static_cast<double>(points.size());
    const Mat6 global_cov = detail::population_covariance(points, global_mean);
    const Mat6 reg = options.reg_floor * Mat6::Identity();

    GmmStainModel model;
    model.space = space;
    model.weights.resize(static_cast<std::size_t>(k));
    model.means.resize(static_cast<std::size_t>(k));
    model.covariances.resize(static_cast<std::size_t>(k));
    double weight_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<Vec6> members;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (labels[i] == c) members.push_back(points[i]);
        if (members.size() >= 2) {
            Vec6 mean = Vec6::Zero();
            for (const auto& p : members) mean += p;
            mean /= static_cast<double>(members.size());
            model.means[c] = mean;
            model.covariances[c] = detail::population_covariance(members, mean) + reg;
        } else {
            model.means[c] = members.empty() ? centers[c] : members[0];
            model.covariances[c] = global_cov + reg;
        }
        model.weights[c] = static_cast<double>(std::max<std::size_t>(members.size(), 1));
        weight_sum += model.weights[c];
    }
    for (auto& w : model.weights) w /= weight_sum;

    GmmFitTrace local;
    GmmFitTrace& t = trace ? *trace : local;
    t = GmmFitTrace{};

    std::vector<double> resp;
    double ll = detail::expectation(points, model, resp);
    t.log_likelihood.push_back(ll);
    for (int it = 0; it < options.max_iter; ++it) {
        detail::maximization(points, resp, options.reg_floor, model);
        const double next = detail::expectation(points, model, resp);
        t.log_likelihood.push_back(next);
        t.iterations = it + 1;
        const double gain = next - ll;
        ll = next;
        if (gain < options.tol) {
            t.converged = true;
            break;
        }
    }
    return model;
}

inline GmmStainModel fit_gmm(std::span<const ChannelStats> stats, ColorSpace space, const GmmOptions& options,
                             GmmFitTrace* trace = nullptr)
{
    if (options.k < 1 || stats.size() < static_cast<std::size_t>(options.k))
        throw Error(ErrorCode::InsufficientData, "GMM with k=" + std::to_string(options.k) + " needs at least " +
                                                     std::to_string(std::max(options.k, 1)) + " images, got " +
                                                     std::to_string(stats.size()));
    detail::require_entries_in_space(stats, space);
    std::vector<Vec6> points;
    points.reserve(stats.size());
    for (const auto& s : stats) points.push_back(s.as_vector());
    return fit_gmm_points(points, space, options, trace);
}

// ---------------------------------------------------------------------------
// Sampling.

/// Cholesky factor of a positive semi-definite matrix. Non-positive pivots
/// zero their column, so degenerate (e.g. all-zero) covariances sample the mean.
inline Mat6 semidefinite_cholesky(const Mat6& a)
{
    Mat6 l = Mat6::Zero();
    for (int j = 0; j < 6; ++j) {
        double d = a(j, j);
        for (int p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
        if (!(d > 1e-300)) continue;
        const double root = std::sqrt(d);
        l(j, j) = root;
        for (int i = j + 1; i < 6; ++i) {
            double s = a(i, j);
            for (int p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
            l(i, j) = s / root;
        }
    }
    return l;
}

namespace detail {

inline ChannelStats clamp_sigma(ColorSpace space, const Vec6& v)
{
    auto s = ChannelStats::from_vector(space, v);
    for (auto& x : s.sigma) x = std::max(x, 0.0);
    return s;
}

} // namespace detail

/// Draw order: six normals for mu1..3 then sigma1..3.
inline ChannelStats sample_target_stats(const UnimodalStainModel& model, Rng& rng)
{
    Vec6 v;
    for (int i = 0; i < 6; ++i) v[i] = model.mean[i] + model.std[i] * rng.normal();
    return detail::clamp_sigma(model.space, v);
}

/// Draw order: one uniform for the component, then six normals.
inline ChannelStats sample_target_stats(const GmmStainModel& model, Rng& rng)
{
    const double u = rng.uniform();
    int comp = -1;
    double cum = 0.0;
    for (int c = 0; c < model.k(); ++c) {
        if (model.weights[c] <= 0.0) continue;
        comp = c;
        cum += model.weights[c];
        if (u < cum) break;
    }
    if (comp < 0) throw Error(ErrorCode::DegenerateComponent, "mixture has no component with positive weight");
    Vec6 z;
    for (int i = 0; i < 6; ++i) z[i] = rng.normal();
    const Vec6 v = model.means[comp] + semidefinite_cholesky(model.covariances[comp]) * z;
    return detail::clamp_sigma(model.space, v);
}

inline Vec6 mixture_mean(const GmmStainModel& model)
{
    Vec6 m = Vec6::Zero();
    for (int c = 0; c < model.k(); ++c) m += model.weights[c] * model.means[c];
    return m;
}

inline Mat6 mixture_covariance(const GmmStainModel& model)
{
    const Vec6 mean = mixture_mean(model);
    Mat6 cov = Mat6::Zero();
    for (int c = 0; c < model.k(); ++c) {
        const Vec6 d = model.means[c] - mean;
        cov += model.weights[c] * (model.covariances[c] + d * d.transpose());
    }
    return cov;
}

// ---------------------------------------------------------------------------
// Corpus subsampling.

/// round(n * fraction), at least 1 for a non-empty group, at most n.
inline std::size_t subsample_count(std::size_t n, double fraction)
{
    if (n == 0) return 0;
    const auto c = static_cast<std::size_t>(std::llround(static_cast<double>(n) * std::clamp(fraction, 0.0, 1.0)));
    return std::clamp<std::size_t>(c, 1, n);
}

/// Reservoir sample (Algorithm R) of `count` indices out of n, returned sorted.
inline std::vector<std::size_t> reservoir_sample(std::size_t n, std::size_t count, Rng& rng)
{
    count = std::min(count, n);
    std::vector<std::size_t> chosen(count);
    for (std::size_t i = 0; i < count; ++i) chosen[i] = i;
    for (std::size_t i = count; i < n; ++i) {
        const std::size_t j = rng.below(i + 1);
        if (j < count) chosen[j] = i;
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

} // namespace pathaug
