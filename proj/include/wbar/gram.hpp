#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "wbar/errors.hpp"
#include "wbar/quantile.hpp"

namespace wbar {

/// Inner-product coefficients that fully determine the quadratic calibration
/// objective: s_g(i,j) = <g_i, g_j>, sigma_g(j) = <g_j, g0>,
/// sigma0_sq = <g0, g0>, all in L2(0,1) via midpoint quadrature. The centered
/// matrix has entries <g_i - g0, g_j - g0>, assembled from the raw pieces.
class GramSystem {
  public:
    GramSystem(Eigen::MatrixXd s_g, Eigen::VectorXd sigma_g, double sigma0_sq)
        : s_g_(std::move(s_g)), sigma_g_(std::move(sigma_g)), sigma0_sq_(sigma0_sq) {
        if (s_g_.rows() != s_g_.cols() || s_g_.rows() != sigma_g_.size() || s_g_.rows() < 1)
            throw invalid_input_error("GramSystem: inconsistent dimensions");
        if (sigma0_sq_ < 0.0) throw invalid_input_error("GramSystem: negative sigma0_sq");
        const auto j = s_g_.rows();
        centered_ = s_g_ - sigma_g_ * Eigen::RowVectorXd::Ones(j) -
                    Eigen::VectorXd::Ones(j) * sigma_g_.transpose() +
                    Eigen::MatrixXd::Constant(j, j, sigma0_sq_);
    }

    std::size_t size() const { return static_cast<std::size_t>(s_g_.rows()); }
    const Eigen::MatrixXd& raw() const { return s_g_; }
    const Eigen::VectorXd& sigma() const { return sigma_g_; }
    double sigma0_sq() const { return sigma0_sq_; }
    const Eigen::MatrixXd& centered() const { return centered_; }

    /// PSD check with an eigenvalue floor of -tol_scale * trace; midpoint
    /// quadrature can leave eigenvalues a rounding error below zero.
    bool is_psd(double tol_scale = 1e-10) const {
        return min_eigenvalue(s_g_) >= -tol_scale * std::max(s_g_.trace(), 1.0) &&
               min_eigenvalue(centered_) >= -tol_scale * std::max(centered_.trace(), 1.0);
    }

    static double min_eigenvalue(const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

  private:
    Eigen::MatrixXd s_g_;
    Eigen::VectorXd sigma_g_;
    double sigma0_sq_;
    Eigen::MatrixXd centered_;
};

/// Assemble the Gram system of a model set against a target on a common
/// quadrature grid. Each quantile is evaluated once per node.
inline GramSystem gram_system(const std::vector<QuantileFunction>& models,
                              const QuantileFunction& target, const Grid& grid) {
    if (models.empty()) throw invalid_input_error("gram_system: need at least one model");
    const std::size_t j = models.size(), m = grid.size();
    Eigen::MatrixXd g(j, m);
    for (std::size_t i = 0; i < j; ++i) {
        const auto vals = detail::evaluate_on_grid(models[i], grid, "gram_system");
        for (std::size_t k = 0; k < m; ++k) g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = vals[k];
    }
    const auto g0 = detail::evaluate_on_grid(target, grid, "gram_system");
    Eigen::VectorXd g0v = Eigen::Map<const Eigen::VectorXd>(g0.data(), static_cast<Eigen::Index>(m));
    const double h = grid.step();
    Eigen::MatrixXd s_g = (g * g.transpose()) * h;
    s_g = ((s_g + s_g.transpose()) * 0.5).eval();  // enforce exact symmetry
    Eigen::VectorXd sigma_g = (g * g0v) * h;
    const double sigma0 = g0v.squaredNorm() * h;
    return GramSystem(std::move(s_g), std::move(sigma_g), sigma0);
}

}  // namespace wbar
