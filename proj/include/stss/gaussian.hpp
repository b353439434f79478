#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "stss/errors.hpp"

namespace stss {

/// Moment-form multivariate Gaussian.
struct GaussianNd {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Natural-form multivariate Gaussian: precision and precision * mean.
struct NaturalGaussianNd {
    Eigen::VectorXd precision_mean;
    Eigen::MatrixXd precision;
};

namespace detail {
inline constexpr double kJitterStart = 1e-12;
inline constexpr double kJitterMax = 1e-4;
} // namespace detail

/// Cholesky factorization with jitter escalation. Starting from a tiny
/// relative jitter, the diagonal bump grows by x10 up to 1e-4 * trace/D;
/// past that a NumericalError carrying the smallest eigenvalue is thrown.
inline Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(const Eigen::MatrixXd& S,
                                                    const char* what = "matrix") {
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() == Eigen::Success) return llt;
    const int D = static_cast<int>(S.rows());
    const double scale = std::max(S.trace() / D, 1e-300);
    for (double j = detail::kJitterStart; j <= detail::kJitterMax * 1.0000001; j *= 10.0) {
        Eigen::MatrixXd Sj = S;
        Sj.diagonal().array() += j * scale;
        llt.compute(Sj);
        if (llt.info() == Eigen::Success) return llt;
    }
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S)
                               .eigenvalues()
                               .minCoeff();
    throw NumericalError(std::string("Cholesky failed after jitter escalation for ") + what +
                             ", smallest eigenvalue " + std::to_string(min_eig),
                         min_eig);
}

inline NaturalGaussianNd to_natural(const GaussianNd& g) {
    auto llt = chol_with_jitter(g.cov, "covariance");
    NaturalGaussianNd n;
    n.precision = llt.solve(Eigen::MatrixXd::Identity(g.cov.rows(), g.cov.cols()));
    n.precision = 0.5 * (n.precision + n.precision.transpose()).eval();
    n.precision_mean = n.precision * g.mean;
    return n;
}

inline GaussianNd to_moment(const NaturalGaussianNd& n) {
    auto llt = chol_with_jitter(n.precision, "precision");
    GaussianNd g;
    g.cov = llt.solve(Eigen::MatrixXd::Identity(n.precision.rows(), n.precision.cols()));
    g.cov = 0.5 * (g.cov + g.cov.transpose()).eval();
    g.mean = llt.solve(n.precision_mean);
    return g;
}

/// Gaussian product in natural parameters:
/// cov = (L_lik + L_prior)^-1, mean = cov (h_lik + h_prior).
inline GaussianNd posterior_from_likelihood_and_prior(const NaturalGaussianNd& lik,
                                                      const NaturalGaussianNd& prior) {
    NaturalGaussianNd sum;
    sum.precision = lik.precision + prior.precision;
    sum.precision_mean = lik.precision_mean + prior.precision_mean;
    return to_moment(sum);
}

/// Posterior for precision A^T A / noise_var + diag(site_prec) via the
/// rank-N matrix inversion lemma; O(N D^2) for N < D.
/// y_projection = A^T y.
inline GaussianNd woodbury_posterior(const Eigen::MatrixXd& A, double noise_var,
                                     const Eigen::VectorXd& site_prec,
                                     const Eigen::VectorXd& site_precmean,
                                     const Eigen::VectorXd& y_projection) {
    if (!(noise_var > 0.0)) throw ConfigError("woodbury_posterior: noise_var must be positive");
    const int N = static_cast<int>(A.rows());
    const int D = static_cast<int>(A.cols());
    if (site_prec.size() != D || site_precmean.size() != D || y_projection.size() != D)
        throw ConfigError("woodbury_posterior: dimension mismatch");
    if ((site_prec.array() <= 0.0).any())
        throw ConfigError("woodbury_posterior: site precisions must be positive");

    const Eigen::VectorXd s = site_prec.cwiseInverse(); // site variances
    // B = A diag(s); M = noise_var I + A diag(s) A^T
    Eigen::MatrixXd B = A;
    for (int j = 0; j < D; ++j) B.col(j) *= s(j);
    Eigen::MatrixXd M = B * A.transpose();
    M = 0.5 * (M + M.transpose()).eval();
    M.diagonal().array() += noise_var;
    auto llt = chol_with_jitter(M, "woodbury inner matrix");
    const Eigen::MatrixXd W = llt.solve(B); // N x D

    GaussianNd out;
    out.cov = -B.transpose() * W;
    out.cov.diagonal() += s;
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    const Eigen::VectorXd h = y_projection / noise_var + site_precmean;
    const Eigen::VectorXd sh = s.cwiseProduct(h);
    out.mean = sh - B.transpose() * llt.solve(A * sh);
    return out;
}

/// Diagonal-only variant of woodbury_posterior used inside EP sweeps;
/// returns mean and diag(cov) without forming the D x D covariance.
inline void woodbury_posterior_diag(const Eigen::MatrixXd& A, double noise_var,
                                    const Eigen::VectorXd& site_prec,
                                    const Eigen::VectorXd& site_precmean,
                                    const Eigen::VectorXd& y_projection, Eigen::VectorXd& mean,
                                    Eigen::VectorXd& var) {
    const int D = static_cast<int>(A.cols());
    const Eigen::VectorXd s = site_prec.cwiseInverse();
    Eigen::MatrixXd B = A;
    for (int j = 0; j < D; ++j) B.col(j) *= s(j);
    Eigen::MatrixXd M = B * A.transpose();
    M = 0.5 * (M + M.transpose()).eval();
    M.diagonal().array() += noise_var;
    auto llt = chol_with_jitter(M, "woodbury inner matrix");
    const Eigen::MatrixXd W = llt.solve(B);
    var = s - W.cwiseProduct(B).colwise().sum().transpose();
    var = var.cwiseMax(1e-300);
    const Eigen::VectorXd h = y_projection / noise_var + site_precmean;
    const Eigen::VectorXd sh = s.cwiseProduct(h);
    mean = sh - B.transpose() * llt.solve(A * sh);
}

} // namespace stss
