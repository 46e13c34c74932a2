#pragma once

// Independent reference computations. Nothing here calls into the library
// numerics; only plain loops, long double, and Gaussian elimination.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmmvs/dataset.hpp"

namespace oracle {

/// ARI by counting agreeing subject pairs one by one.
inline double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
    const std::size_t n = a.size();
    long double same_both = 0, same_a = 0, same_b = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            same_both += sa && sb;
            same_a += sa;
            same_b += sb;
            pairs += 1;
        }
    if (pairs == 0) return 1.0;
    const long double expected = same_a * same_b / pairs;
    const long double max_index = 0.5L * (same_a + same_b);
    if (max_index == expected) return 1.0;
    return static_cast<double>((same_both - expected) / (max_index - expected));
}

/// ARI from an explicit contingency table keyed by label values.
inline double ari_table(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, long long> table;
    std::map<int, long long> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++table[{a[i], b[i]}];
        ++rows[a[i]];
        ++cols[b[i]];
    }
    auto c2 = [](long long m) { return static_cast<long double>(m) * (m - 1) / 2.0L; };
    long double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (const auto& [key, m] : table) sum_ij += c2(m);
    for (const auto& [key, m] : rows) sum_a += c2(m);
    for (const auto& [key, m] : cols) sum_b += c2(m);
    const long double total = c2(static_cast<long long>(a.size()));
    if (total == 0) return 1.0;
    const long double expected = sum_a * sum_b / total;
    const long double max_index = 0.5L * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return static_cast<double>((sum_ij - expected) / (max_index - expected));
}

/// Log-likelihood of a mixture of diagonal Gaussians; means[k][n], vars[k][n].
inline double diag_gmm_loglik(const Eigen::MatrixXd& y, const std::vector<double>& weights,
                              const std::vector<std::vector<double>>& means, const std::vector<std::vector<double>>& vars) {
    long double total = 0;
    for (Eigen::Index s = 0; s < y.rows(); ++s) {
        std::vector<long double> logs;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            long double l = std::log(static_cast<long double>(weights[k]));
            for (Eigen::Index n = 0; n < y.cols(); ++n) {
                const long double r = y(s, n) - means[k][static_cast<std::size_t>(n)];
                const long double v = vars[k][static_cast<std::size_t>(n)];
                l += -0.5L * std::log(2.0L * std::numbers::pi_v<long double> * v) - r * r / (2.0L * v);
            }
            logs.push_back(l);
        }
        const long double m = *std::max_element(logs.begin(), logs.end());
        long double acc = 0;
        for (auto l : logs) acc += std::exp(l - m);
        total += m + std::log(acc);
    }
    return static_cast<double>(total);
}

/// Solves A x = b by Gaussian elimination with partial pivoting in long
/// double. Returns nullopt when a pivot is negligible.
inline std::optional<std::vector<long double>> solve(std::vector<std::vector<long double>> A, std::vector<long double> b) {
    const std::size_t n = b.size();
    long double scale = 0;
    for (const auto& row : A)
        for (auto v : row) scale = std::max(scale, std::fabs(v));
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
        if (std::fabs(A[piv][c]) <= 1e-12L * std::max(scale, 1.0L)) return std::nullopt;
        std::swap(A[piv], A[c]);
        std::swap(b[piv], b[c]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const long double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<long double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        long double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= A[i][k] * x[k];
        x[i] = acc / A[i][i];
    }
    return x;
}

struct OlsOracle {
    std::vector<long double> beta;  // intercept first
    double rss = 0.0;
    double bic = 0.0;
};

/// OLS with intercept via the normal equations; BIC = -loglik + (p + 2) log S
/// using the maximum-likelihood variance.
inline std::optional<OlsOracle> ols(const std::vector<double>& y, const std::vector<std::vector<double>>& cols) {
    const std::size_t S = y.size(), q = cols.size() + 1;
    if (S <= q) return std::nullopt;
    auto x = [&](std::size_t s, std::size_t j) -> long double { return j == 0 ? 1.0L : cols[j - 1][s]; };
    std::vector<std::vector<long double>> A(q, std::vector<long double>(q, 0));
    std::vector<long double> b(q, 0);
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t i = 0; i < q; ++i) {
            b[i] += x(s, i) * y[s];
            for (std::size_t j = 0; j < q; ++j) A[i][j] += x(s, i) * x(s, j);
        }
    auto beta = solve(A, b);
    if (!beta) return std::nullopt;
    long double rss = 0;
    for (std::size_t s = 0; s < S; ++s) {
        long double fit = 0;
        for (std::size_t j = 0; j < q; ++j) fit += (*beta)[j] * x(s, j);
        rss += (y[s] - fit) * (y[s] - fit);
    }
    OlsOracle o;
    o.beta = *beta;
    o.rss = static_cast<double>(rss);
    const long double sigma2 = rss / S;
    const long double ll = -0.5L * S * (std::log(2.0L * std::numbers::pi_v<long double> * sigma2) + 1.0L);
    o.bic = static_cast<double>(-ll + static_cast<long double>(q + 1) * std::log(static_cast<long double>(S)));
    return o;
}

struct SubsetOptimum {
    std::vector<std::size_t> subset;
    double bic = std::numeric_limits<double>::infinity();
};

/// Best BIC over every subset of the candidate columns.
inline SubsetOptimum exhaustive_subsets(const std::vector<double>& y, const std::vector<std::vector<double>>& candidates) {
    SubsetOptimum best;
    const std::size_t m = candidates.size();
    for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
        std::vector<std::vector<double>> cols;
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < m; ++j)
            if (mask & (1u << j)) {
                cols.push_back(candidates[j]);
                idx.push_back(j);
            }
        const auto f = ols(y, cols);
        if (f && f->bic < best.bic) {
            best.bic = f->bic;
            best.subset = idx;
        }
    }
    return best;
}

/// Dataset with intercept-only designs (no covariates) from an S x N matrix.
inline gmmvs::LongitudinalDataset make_dataset(const Eigen::MatrixXd& y, std::vector<Eigen::MatrixXd> covariates = {}) {
    std::vector<std::string> ids;
    for (Eigen::Index s = 0; s < y.rows(); ++s) ids.push_back("s" + std::to_string(s + 1));
    std::vector<double> times;
    for (Eigen::Index n = 0; n < y.cols(); ++n) times.push_back(static_cast<double>(n + 1));
    return gmmvs::LongitudinalDataset(std::move(ids), std::move(times), y, std::move(covariates));
}

/// Random S x N data from K well-separated diagonal groups.
inline Eigen::MatrixXd clustered_matrix(std::mt19937_64& rng, std::size_t S, std::size_t N, std::size_t K, double spread = 4.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<std::vector<double>> centers(K, std::vector<double>(N));
    for (auto& c : centers)
        for (auto& v : c) v = spread * z(rng);
    Eigen::MatrixXd y(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(N));
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t n = 0; n < N; ++n) y(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) = centers[s % K][n] + z(rng);
    return y;
}

}  // namespace oracle
