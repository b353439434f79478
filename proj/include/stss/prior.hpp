#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "stss/errors.hpp"
#include "stss/gaussian.hpp"
#include "stss/kernel.hpp"
#include "stss/moments.hpp"
#include "stss/rng.hpp"

namespace stss {

/// Hyperparameters of the spatio-temporal spike-and-slab model.
struct PriorConfig {
    int D = 0;
    int T = 0;
    Eigen::VectorXd mu0;      // length D
    KernelSpec kernel;        // builds Sigma0
    double alpha = 0.99;      // temporal correlation, in [0, 1]
    double beta = 1.0 - 0.99 * 0.99; // innovation, >= 0
    double slab_var = 1.0;    // tau0
    double noise_var = 1e-2;  // sigma0^2

    void validate() const {
        if (D < 1 || T < 1) throw ConfigError("PriorConfig: D and T must be positive");
        if (mu0.size() != D) throw ConfigError("PriorConfig: mu0 must have length D");
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("PriorConfig: alpha must be in [0,1]");
        if (beta < 0.0) throw ConfigError("PriorConfig: beta must be nonnegative");
        if (alpha <= 0.0 && beta <= 0.0)
            throw ConfigError("PriorConfig: at least one of alpha, beta must be positive");
        if (!(slab_var > 0.0)) throw ConfigError("PriorConfig: slab_var must be positive");
        if (!(noise_var > 0.0)) throw ConfigError("PriorConfig: noise_var must be positive");
    }

    bool is_stationary() const { return std::abs(alpha * alpha + beta - 1.0) < 1e-12; }
};

/// Latent variables of one synthetic instance.
struct GroundTruth {
    Eigen::MatrixXd Gamma; // D x T
    Eigen::MatrixXd Z;     // D x T, entries in {0,1}
    Eigen::MatrixXd X;     // D x T
    Eigen::MatrixXd E;     // N x T
};

struct MmvProblem {
    Eigen::MatrixXd A; // N x D
    Eigen::MatrixXd Y; // N x T
    double noise_var = 0.0;

    int N() const { return static_cast<int>(A.rows()); }
    int D() const { return static_cast<int>(A.cols()); }
    int T() const { return static_cast<int>(Y.cols()); }
};

/// Samples the latent Gaussian chain:
///   gamma_1 ~ N(mu0, Sigma0),  gamma_t ~ N((1-a) mu0 + a gamma_{t-1}, b Sigma0).
/// One Cholesky factor of Sigma0 is reused for all t.
inline Eigen::MatrixXd sample_gamma_chain(const PriorConfig& cfg, std::uint64_t rng_seed) {
    cfg.validate();
    const Eigen::MatrixXd Sigma0 = build_covariance(cfg.kernel, cfg.D);
    const Eigen::MatrixXd L = chol_with_jitter(Sigma0, "Sigma0").matrixL();
    const double sqrt_beta = std::sqrt(cfg.beta);
    Rng rng(rng_seed);
    Eigen::MatrixXd Gamma(cfg.D, cfg.T);
    Eigen::VectorXd g(cfg.D);
    for (int i = 0; i < cfg.D; ++i) g(i) = rng.normal();
    Gamma.col(0) = cfg.mu0 + L * g;
    for (int t = 1; t < cfg.T; ++t) {
        for (int i = 0; i < cfg.D; ++i) g(i) = rng.normal();
        Gamma.col(t) =
            (1.0 - cfg.alpha) * cfg.mu0 + cfg.alpha * Gamma.col(t - 1) + sqrt_beta * (L * g);
    }
    return Gamma;
}

/// Z_{i,t} ~ Bernoulli(Phi(Gamma_{i,t})), independently given Gamma.
inline Eigen::MatrixXd sample_support(const Eigen::MatrixXd& Gamma, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    Eigen::MatrixXd Z(Gamma.rows(), Gamma.cols());
    for (int t = 0; t < Gamma.cols(); ++t)
        for (int i = 0; i < Gamma.rows(); ++i)
            Z(i, t) = rng.bernoulli(probit(Gamma(i, t))) ? 1.0 : 0.0;
    return Z;
}

/// Marginal prior activation probability Phi(mu / sqrt(1 + Sigma_ii)).
inline double marginal_activation_prob(double mu_i, double sigma_ii) {
    if (sigma_ii < 0.0) throw ConfigError("marginal_activation_prob: sigma_ii must be >= 0");
    return probit(mu_i / std::sqrt(1.0 + sigma_ii));
}

/// Scalar mu0 such that D * marginal_activation_prob(mu0, sigma_ii) hits the
/// target expected number of active coefficients per column.
inline double calibrate_mu0_for_sparsity(double target_active_per_column, int D,
                                         double sigma_ii) {
    if (!(target_active_per_column > 0.0) || !(target_active_per_column < D))
        throw ConfigError("calibrate_mu0_for_sparsity: target must be in (0, D)");
    return std::sqrt(1.0 + sigma_ii) * probit_inverse(target_active_per_column / D);
}

enum class ForwardKind { gaussian_iid, column_correlated };

/// A with rows iid N(0, C/N), C_ij = r^|i-j|; empirical column correlation
/// tends to r^|i-j| and E[A_ij^2] = 1/N matches the iid case.
inline Eigen::MatrixXd sample_forward(int N, int D, ForwardKind kind, double r,
                                      std::uint64_t rng_seed) {
    if (N < 1) throw ConfigError("sample_forward: N must be >= 1");
    Rng rng(rng_seed);
    Eigen::MatrixXd A(N, D);
    const double scale = 1.0 / std::sqrt(static_cast<double>(N));
    if (kind == ForwardKind::gaussian_iid) {
        for (int j = 0; j < D; ++j)
            for (int i = 0; i < N; ++i) A(i, j) = scale * rng.normal();
        return A;
    }
    if (r < 0.0 || r >= 1.0) throw ConfigError("sample_forward: r must be in [0,1)");
    Eigen::MatrixXd C(D, D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) C(i, j) = std::pow(r, std::abs(i - j));
    const Eigen::MatrixXd L = chol_with_jitter(C, "column correlation").matrixL();
    Eigen::VectorXd g(D);
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < D; ++j) g(j) = rng.normal();
        A.row(i) = scale * (L * g).transpose();
    }
    return A;
}

inline constexpr double kSnrInfinite = std::numeric_limits<double>::infinity();

/// Draws nonzero coefficients N(0,1) on the given support.
inline Eigen::MatrixXd sample_signal(const Eigen::MatrixXd& Z, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(Z.rows(), Z.cols());
    for (int t = 0; t < Z.cols(); ++t)
        for (int i = 0; i < Z.rows(); ++i)
            if (Z(i, t) != 0.0) X(i, t) = rng.normal();
    return X;
}

/// Noise matrix scaled so the realized SNR in dB is exact:
///   10 log10(|AX|_F^2 / |E|_F^2) = snr_db.
/// The implied per-entry noise variance |E|_F^2 / (N T) is returned alongside.
inline std::pair<Eigen::MatrixXd, double> sample_noise_for_snr(const Eigen::MatrixXd& AX,
                                                               double snr_db,
                                                               std::uint64_t rng_seed) {
    const int N = static_cast<int>(AX.rows()), T = static_cast<int>(AX.cols());
    if (std::isinf(snr_db))
        return {Eigen::MatrixXd::Zero(N, T), 1e-12};
    const double signal = AX.squaredNorm();
    if (!(signal > 0.0)) throw ConfigError("sample_noise_for_snr: zero signal power");
    Rng rng(rng_seed);
    Eigen::MatrixXd E(N, T);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < N; ++i) E(i, t) = rng.normal();
    const double target = signal / std::pow(10.0, snr_db / 10.0);
    E *= std::sqrt(target / E.squaredNorm());
    return {E, target / (static_cast<double>(N) * T)};
}

/// Full synthetic instance per the generative model.
inline std::pair<MmvProblem, GroundTruth> sample_problem(const PriorConfig& cfg, int N,
                                                         ForwardKind kind, double r,
                                                         double snr_db,
                                                         std::uint64_t rng_seed) {
    cfg.validate();
    GroundTruth gt;
    gt.Gamma = sample_gamma_chain(cfg, derive_seed(rng_seed, 1));
    gt.Z = sample_support(gt.Gamma, derive_seed(rng_seed, 2));
    if (gt.Z.sum() == 0.0) {
        gt.Z = sample_support(gt.Gamma, derive_seed(rng_seed, 3));
        if (gt.Z.sum() == 0.0)
            throw ConfigError("sample_problem: all-zero support after resampling");
    }
    gt.X = sample_signal(gt.Z, derive_seed(rng_seed, 4));

    MmvProblem p;
    p.A = sample_forward(N, cfg.D, kind, r, derive_seed(rng_seed, 5));
    const Eigen::MatrixXd AX = p.A * gt.X;
    auto [E, noise_var] = sample_noise_for_snr(AX, snr_db, derive_seed(rng_seed, 6));
    gt.E = E;
    p.Y = AX + E;
    p.noise_var = noise_var;
    return {p, gt};
}

// ---- problem file format -------------------------------------------------
// Header line "# stss-mmv v1 N D T noise_var", then CSV blocks introduced by
// sentinel lines [A], [Y] and optionally [X], [Z], [GAMMA]; row-major,
// 17 significant digits.

namespace detail {
inline void write_block(std::ostream& os, const char* name, const Eigen::MatrixXd& M) {
    os << '[' << name << "]\n";
    char buf[64];
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", M(i, j));
            os << buf << (j + 1 < M.cols() ? "," : "");
        }
        os << '\n';
    }
}

inline Eigen::MatrixXd read_block(std::istream& is, int rows, int cols) {
    Eigen::MatrixXd M(rows, cols);
    std::string line;
    for (int i = 0; i < rows; ++i) {
        if (!std::getline(is, line)) throw ConfigError("problem file: truncated block");
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < cols; ++j) {
            if (!std::getline(ss, cell, ',')) throw ConfigError("problem file: short row");
            M(i, j) = std::stod(cell);
        }
    }
    return M;
}
} // namespace detail

inline void write_problem(std::ostream& os, const MmvProblem& p,
                          const GroundTruth* gt = nullptr) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", p.noise_var);
    os << "# stss-mmv v1 " << p.N() << ' ' << p.D() << ' ' << p.T() << ' ' << buf << '\n';
    detail::write_block(os, "A", p.A);
    detail::write_block(os, "Y", p.Y);
    if (gt) {
        detail::write_block(os, "X", gt->X);
        detail::write_block(os, "Z", gt->Z);
        detail::write_block(os, "GAMMA", gt->Gamma);
    }
}

inline void write_problem_file(const std::string& path, const MmvProblem& p,
                               const GroundTruth* gt = nullptr) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    write_problem(os, p, gt);
}

/// Reads a problem file; ground-truth blocks are optional and reported via
/// has_truth.
inline MmvProblem read_problem(std::istream& is, GroundTruth* gt = nullptr,
                               bool* has_truth = nullptr) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("problem file: empty");
    std::stringstream hs(line);
    std::string hash, tag, ver;
    int N, D, T;
    double noise_var;
    hs >> hash >> tag >> ver >> N >> D >> T >> noise_var;
    if (hash != "#" || tag != "stss-mmv" || ver != "v1" || hs.fail())
        throw ConfigError("problem file: bad header");
    MmvProblem p;
    p.noise_var = noise_var;
    if (has_truth) *has_truth = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line == "[A]") p.A = detail::read_block(is, N, D);
        else if (line == "[Y]") p.Y = detail::read_block(is, N, T);
        else if (line == "[X]") {
            auto M = detail::read_block(is, D, T);
            if (gt) gt->X = M;
            if (has_truth) *has_truth = true;
        } else if (line == "[Z]") {
            auto M = detail::read_block(is, D, T);
            if (gt) gt->Z = M;
        } else if (line == "[GAMMA]") {
            auto M = detail::read_block(is, D, T);
            if (gt) gt->Gamma = M;
        } else {
            throw ConfigError("problem file: unknown block sentinel " + line);
        }
    }
    if (p.A.size() == 0 || p.Y.size() == 0) throw ConfigError("problem file: missing A or Y");
    return p;
}

inline MmvProblem read_problem_file(const std::string& path, GroundTruth* gt = nullptr,
                                    bool* has_truth = nullptr) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open: " + path);
    return read_problem(is, gt, has_truth);
}

} // namespace stss
