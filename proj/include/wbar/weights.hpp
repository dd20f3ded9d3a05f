#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "wbar/errors.hpp"

namespace wbar {

/// A point on the unit simplex S_J: nonnegative entries summing to one
/// (within 1e-12). Zeros are stored exactly; sparsity is meaningful.
class WeightVector {
  public:
    static constexpr double kSumTolerance = 1e-12;

    explicit WeightVector(std::vector<double> w) : w_(std::move(w)) {
        if (w_.empty()) throw invalid_input_error("WeightVector: empty weight array");
        double sum = 0.0;
        for (double x : w_) {
            if (!std::isfinite(x)) throw invalid_input_error("WeightVector: non-finite entry");
            if (x < 0.0) throw invalid_input_error("WeightVector: negative entry " + std::to_string(x));
            sum += x;
        }
        if (std::abs(sum - 1.0) > kSumTolerance)
            throw invalid_input_error("WeightVector: entries sum to " + std::to_string(sum) + ", not 1");
    }

    static WeightVector uniform(std::size_t j) {
        if (j == 0) throw invalid_input_error("WeightVector: J must be >= 1");
        return WeightVector(std::vector<double>(j, 1.0 / static_cast<double>(j)));
    }

    std::size_t size() const { return w_.size(); }
    double operator[](std::size_t i) const { return w_[i]; }
    const std::vector<double>& values() const { return w_; }

    std::vector<std::size_t> active_set() const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < w_.size(); ++i)
            if (w_[i] > 0.0) idx.push_back(i);
        return idx;
    }

  private:
    std::vector<double> w_;
};

/// The sparsity-preserving projection used throughout the solvers:
/// (i) truncate nonpositive coordinates to zero, (ii) renormalize by the
/// remaining mass. Zeros in the input stay zero. Not the Euclidean
/// projection onto the simplex.
inline WeightVector project_simplex(const std::vector<double>& x) {
    if (x.empty()) throw invalid_input_error("project_simplex: empty input");
    std::vector<double> y(x.size(), 0.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw invalid_input_error("project_simplex: non-finite entry");
        if (x[i] > 0.0) {
            y[i] = x[i];
            mass += x[i];
        }
    }
    if (mass <= 0.0)
        throw degenerate_projection_error("project_simplex: no positive mass to normalize");
    for (double& v : y) v /= mass;
    return WeightVector(std::move(y));
}

namespace detail {

/// Euclidean projection onto the simplex restricted to the coordinates in
/// `support` (all others forced to exact zero). Standard threshold method:
/// w_j = max(x_j - tau, 0) with tau chosen so the support sums to one.
inline std::vector<double> project_simplex_euclidean(const std::vector<double>& x,
                                                     const std::vector<std::size_t>& support) {
    std::vector<double> out(x.size(), 0.0);
    if (support.empty())
        throw degenerate_projection_error("project_simplex_euclidean: empty support");
    std::vector<double> vals;
    vals.reserve(support.size());
    for (std::size_t j : support) vals.push_back(x[j]);
    std::sort(vals.begin(), vals.end(), std::greater<double>());
    double running = 0.0, tau = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        running += vals[i];
        const double t = (running - 1.0) / static_cast<double>(i + 1);
        if (vals[i] - t > 0.0) tau = t;
    }
    for (std::size_t j : support) out[j] = std::max(x[j] - tau, 0.0);
    // renormalize away rounding drift; exact zeros are untouched
    double sum = std::accumulate(out.begin(), out.end(), 0.0);
    for (double& v : out) v /= sum;
    return out;
}

inline std::vector<std::size_t> full_support(std::size_t n) {
    std::vector<std::size_t> s(n);
    std::iota(s.begin(), s.end(), std::size_t{0});
    return s;
}

}  // namespace detail

}  // namespace wbar
