#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "stss/errors.hpp"
#include "stss/metrics.hpp"
#include "stss/prior.hpp"
#include "stss/solver.hpp"

namespace stss {

/// The four benchmark methods are pure configurations of the one solver.
enum class Method { spatiotemporal, spatial, mmv_joint, independent };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::spatiotemporal: return "spatiotemporal";
        case Method::spatial: return "spatial";
        case Method::mmv_joint: return "mmv_joint";
        case Method::independent: return "independent";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "spatiotemporal") return Method::spatiotemporal;
    if (s == "spatial") return Method::spatial;
    if (s == "mmv_joint") return Method::mmv_joint;
    if (s == "independent") return Method::independent;
    throw ConfigError("unknown method: " + s);
}

struct ExperimentConfig {
    int D = 100;
    int T = 100;
    double alpha = 0.99;
    double beta = 1.0 - 0.99 * 0.99;
    double target_active = 20.0;
    double kernel_lengthscale = 5.0;
    double kernel_variance = 1.0;
    double snr_db = 10.0;
    std::vector<double> undersampling_ratios;  // default 0.05:0.05:0.95
    std::vector<double> coherence_r;           // default 0.05:0.05:0.95
    double exp2_ratio = 0.4;
    int repetitions_exp1 = 100;
    int repetitions_exp2 = 50;
    std::uint64_t base_seed = 0;
    std::vector<Method> methods = {Method::spatiotemporal, Method::spatial, Method::mmv_joint,
                                   Method::independent};
    int threads = 1;
    bool record_timing = false; // off by default so result CSVs are byte-stable
    SolverOptions solver;

    void fill_default_sweeps() {
        if (undersampling_ratios.empty())
            for (int k = 1; k <= 19; ++k) undersampling_ratios.push_back(0.05 * k);
        if (coherence_r.empty())
            for (int k = 1; k <= 19; ++k) coherence_r.push_back(0.05 * k);
    }

    void validate() const {
        for (double r : undersampling_ratios)
            if (!(r > 0.0 && r <= 1.0)) throw ConfigError("undersampling ratio must be in (0,1]");
        for (double r : coherence_r)
            if (!(r >= 0.0 && r < 1.0)) throw ConfigError("coherence r must be in [0,1)");
        if (repetitions_exp1 < 1 || repetitions_exp2 < 1)
            throw ConfigError("repetitions must be >= 1");
        if (methods.empty()) throw ConfigError("no methods configured");
    }
};

/// Prior configuration for one method; mu0 is calibrated so the expected
/// active count per column matches target_active.
inline PriorConfig method_prior(const ExperimentConfig& cfg, Method m, double noise_var) {
    PriorConfig pc;
    pc.D = cfg.D;
    pc.T = cfg.T;
    pc.slab_var = 1.0;
    pc.noise_var = noise_var;
    switch (m) {
        case Method::spatiotemporal:
            pc.alpha = cfg.alpha;
            pc.beta = cfg.beta;
            pc.kernel = se_kernel(cfg.kernel_variance, cfg.kernel_lengthscale);
            break;
        case Method::spatial:
            pc.alpha = 0.0;
            pc.beta = 1.0;
            pc.kernel = se_kernel(cfg.kernel_variance, cfg.kernel_lengthscale);
            break;
        case Method::mmv_joint:
            pc.alpha = 1.0;
            pc.beta = 0.0;
            pc.kernel = se_kernel(cfg.kernel_variance, cfg.kernel_lengthscale);
            break;
        case Method::independent:
            pc.alpha = 0.0;
            pc.beta = 1.0;
            pc.kernel = diagonal_kernel(cfg.kernel_variance);
            break;
    }
    const double mu0 = calibrate_mu0_for_sparsity(cfg.target_active, cfg.D, cfg.kernel_variance);
    pc.mu0 = Eigen::VectorXd::Constant(cfg.D, mu0);
    return pc;
}

struct ResultRow {
    int experiment = 1;
    Method method = Method::spatiotemporal;
    double sweep_value = 0.0;
    std::uint64_t seed = 0;
    double nmse = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    int iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;
    bool failed = false; // solver numerical failure; metrics are NaN in CSV
};

namespace detail {

inline void run_n_tasks(int n, int threads, const std::function<void(int)>& task) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int k = 0; k < n; ++k) task(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) task(k);
        });
    for (auto& th : pool) th.join();
}

/// Ground-truth support shared by the whole sweep; the benchmark protocol
/// fixes one Z realization and redraws noise and nonzero coefficients.
inline Eigen::MatrixXd shared_support(const ExperimentConfig& cfg) {
    PriorConfig gen = method_prior(cfg, Method::spatiotemporal, 1.0);
    const Eigen::MatrixXd Gamma = sample_gamma_chain(gen, derive_seed(cfg.base_seed, 100));
    Eigen::MatrixXd Z = sample_support(Gamma, derive_seed(cfg.base_seed, 101));
    if (Z.sum() == 0.0) {
        Z = sample_support(Gamma, derive_seed(cfg.base_seed, 102));
        if (Z.sum() == 0.0) throw ConfigError("experiment: all-zero shared support");
    }
    return Z;
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, int experiment) {
    const std::vector<double>& sweep =
        (experiment == 1) ? cfg.undersampling_ratios : cfg.coherence_r;
    const int reps = (experiment == 1) ? cfg.repetitions_exp1 : cfg.repetitions_exp2;
    const Eigen::MatrixXd Z = shared_support(cfg);

    struct Cell {
        Eigen::MatrixXd A;
        double sweep_value;
    };
    std::vector<Cell> cells(sweep.size());
    for (size_t k = 0; k < sweep.size(); ++k) {
        const double sv = sweep[k];
        const double ratio = (experiment == 1) ? sv : cfg.exp2_ratio;
        const int N = std::max(1, static_cast<int>(std::lround(ratio * cfg.D)));
        const ForwardKind kind =
            (experiment == 1) ? ForwardKind::gaussian_iid : ForwardKind::column_correlated;
        const double r = (experiment == 1) ? 0.0 : sv;
        cells[k].A = sample_forward(
            N, cfg.D, kind, r,
            derive_seed(cfg.base_seed, static_cast<std::uint64_t>(experiment), k, 0xA));
        cells[k].sweep_value = sv;
    }

    std::vector<ResultRow> rows;
    std::mutex rows_mutex;
    const int n_tasks = static_cast<int>(sweep.size()) * reps;
    run_n_tasks(n_tasks, cfg.threads, [&](int task) {
        const int k = task / reps;
        const int rep = task % reps;
        const std::uint64_t seed =
            derive_seed(cfg.base_seed, static_cast<std::uint64_t>(experiment),
                        static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep));
        const Eigen::MatrixXd X = sample_signal(Z, derive_seed(seed, 1));
        const Eigen::MatrixXd AX = cells[k].A * X;
        auto [E, noise_var] = sample_noise_for_snr(AX, cfg.snr_db, derive_seed(seed, 2));
        MmvProblem prob;
        prob.A = cells[k].A;
        prob.Y = AX + E;
        prob.noise_var = noise_var;

        std::vector<ResultRow> local;
        for (Method m : cfg.methods) {
            ResultRow row;
            row.experiment = experiment;
            row.method = m;
            row.sweep_value = cells[k].sweep_value;
            row.seed = seed;
            const PriorConfig pc = method_prior(cfg, m, noise_var);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                Posterior post = stss::solve(prob, pc, cfg.solver);
                row.nmse = nmse(X, post.x_mean);
                const ScoreReport sr = support_f_measure(Z, post.support_prob);
                row.precision = sr.precision;
                row.recall = sr.recall;
                row.f_measure = sr.f_measure;
                row.iterations = post.iterations;
                row.converged = post.converged;
            } catch (const NumericalError&) {
                row.failed = true;
                row.nmse = row.precision = row.recall = row.f_measure =
                    std::numeric_limits<double>::quiet_NaN();
            }
            const auto t1 = std::chrono::steady_clock::now();
            if (cfg.record_timing)
                row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            local.push_back(row);
        }
        std::lock_guard<std::mutex> lk(rows_mutex);
        rows.insert(rows.end(), local.begin(), local.end());
    });

    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tuple(std::string(method_name(a.method)), a.sweep_value, a.seed) <
               std::tuple(std::string(method_name(b.method)), b.sweep_value, b.seed);
    });
    return rows;
}

} // namespace detail

/// Experiment 1: iid Gaussian forward matrices, undersampling-ratio sweep.
inline std::vector<ResultRow> run_experiment1(ExperimentConfig cfg) {
    cfg.fill_default_sweeps();
    cfg.validate();
    return detail::run_experiment(cfg, 1);
}

/// Experiment 2: column-correlated forward matrices at a fixed ratio,
/// coherence sweep.
inline std::vector<ResultRow> run_experiment2(ExperimentConfig cfg) {
    cfg.fill_default_sweeps();
    cfg.validate();
    return detail::run_experiment(cfg, 2);
}

struct AggregateRow {
    int experiment;
    Method method;
    double sweep_value;
    int n = 0;
    int n_failed = 0;
    double nmse_mean = 0.0, nmse_stderr = 0.0;
    double f_mean = 0.0, f_stderr = 0.0;
};

/// Per (method, sweep value): mean and standard error of NMSE and F,
/// excluding failure-sentinel rows; failure counts reported alongside.
inline std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
    std::map<std::tuple<int, std::string, double>, std::vector<const ResultRow*>> cells;
    for (const auto& r : rows)
        cells[{r.experiment, method_name(r.method), r.sweep_value}].push_back(&r);
    std::vector<AggregateRow> out;
    for (const auto& [key, cell] : cells) {
        AggregateRow a;
        a.experiment = std::get<0>(key);
        a.method = method_from_name(std::get<1>(key));
        a.sweep_value = std::get<2>(key);
        std::vector<double> ns, fs;
        for (const ResultRow* r : cell) {
            if (r->failed) { ++a.n_failed; continue; }
            ns.push_back(r->nmse);
            fs.push_back(r->f_measure);
        }
        a.n = static_cast<int>(ns.size());
        if (a.n == 0) continue; // empty cell omitted
        auto mean_se = [](const std::vector<double>& v) {
            const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            const double se = v.size() > 1 ? std::sqrt(ss / (v.size() - 1) / v.size()) : 0.0;
            return std::pair(mean, se);
        };
        std::tie(a.nmse_mean, a.nmse_stderr) = mean_se(ns);
        std::tie(a.f_mean, a.f_stderr) = mean_se(fs);
        out.push_back(a);
    }
    return out;
}

inline void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << "experiment,method,sweep_value,seed,nmse,precision,recall,f_measure,iterations,"
          "converged,wall_ms\n";
    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        os << r.experiment << ',' << method_name(r.method) << ',' << num(r.sweep_value) << ','
           << r.seed << ',' << num(r.nmse) << ',' << num(r.precision) << ',' << num(r.recall)
           << ',' << num(r.f_measure) << ',' << r.iterations << ',' << (r.converged ? 1 : 0)
           << ',' << num(r.wall_ms) << '\n';
    }
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& aggs) {
    os << "experiment,method,sweep_value,n,n_failed,nmse_mean,nmse_stderr,f_mean,f_stderr\n";
    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };
    for (const auto& a : aggs) {
        os << a.experiment << ',' << method_name(a.method) << ',' << num(a.sweep_value) << ','
           << a.n << ',' << a.n_failed << ',' << num(a.nmse_mean) << ',' << num(a.nmse_stderr)
           << ',' << num(a.f_mean) << ',' << num(a.f_stderr) << '\n';
    }
}

// ---- config file ---------------------------------------------------------
// Plain "key = value" lines, '#' comments; list values are comma-separated.

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

inline void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                              const std::string& value) {
    if (key == "D") cfg.D = std::stoi(value);
    else if (key == "T") cfg.T = std::stoi(value);
    else if (key == "alpha") cfg.alpha = std::stod(value);
    else if (key == "beta") cfg.beta = std::stod(value);
    else if (key == "target_active") cfg.target_active = std::stod(value);
    else if (key == "kernel_lengthscale") cfg.kernel_lengthscale = std::stod(value);
    else if (key == "kernel_variance") cfg.kernel_variance = std::stod(value);
    else if (key == "snr_db") cfg.snr_db = std::stod(value);
    else if (key == "undersampling_ratios") cfg.undersampling_ratios = parse_double_list(value);
    else if (key == "coherence_r") cfg.coherence_r = parse_double_list(value);
    else if (key == "exp2_ratio") cfg.exp2_ratio = std::stod(value);
    else if (key == "repetitions_exp1") cfg.repetitions_exp1 = std::stoi(value);
    else if (key == "repetitions_exp2") cfg.repetitions_exp2 = std::stoi(value);
    else if (key == "base_seed") cfg.base_seed = std::stoull(value);
    else if (key == "threads") cfg.threads = std::stoi(value);
    else if (key == "record_timing") cfg.record_timing = (value == "1" || value == "true");
    else if (key == "max_iters") cfg.solver.max_iters = std::stoi(value);
    else if (key == "tol") cfg.solver.tol = std::stod(value);
    else if (key == "damping") cfg.solver.damping = std::stod(value);
    else if (key == "vacuous_prec") cfg.solver.vacuous_prec = std::stod(value);
    else if (key == "support_screen_init")
        cfg.solver.support_screen_init = (value == "1" || value == "true");
    else if (key == "methods") {
        cfg.methods.clear();
        std::stringstream ss(value);
        std::string cell;
        while (std::getline(ss, cell, ',')) cfg.methods.push_back(method_from_name(cell));
    } else {
        throw ConfigError("unknown config key: " + key);
    }
}

inline ExperimentConfig read_experiment_config(std::istream& is) {
    ExperimentConfig cfg;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) continue;
        apply_config_line(cfg, key, value);
    }
    return cfg;
}

inline ExperimentConfig read_experiment_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    return read_experiment_config(is);
}

} // namespace stss
