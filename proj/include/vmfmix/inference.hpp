// Apache License, Version 2.0, refer to LICENSE.txt
//
// Variational EM for the vMF mixture with a Dirichlet prior over document
// topic proportions. The mean-field family factorizes into a Dirichlet per
// document and a categorical per token; one outer iteration runs a single
// responsibility sweep, a phi refresh, and the closed-form parameter
// update, then scores the bound.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vmfmix/core.hpp"
#include "vmfmix/rng.hpp"
#include "vmfmix/specfun.hpp"

namespace vmfmix {

enum class InitScheme { kSeededTokens, kRandomDirections, kPerturbedGlobalMean };

inline const char* to_string(InitScheme s) {
    switch (s) {
        case InitScheme::kSeededTokens: return "seeded-tokens";
        case InitScheme::kRandomDirections: return "random-directions";
        case InitScheme::kPerturbedGlobalMean: return "perturbed-global-mean";
    }
    return "unknown";
}

inline InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "seeded-tokens") return InitScheme::kSeededTokens;
    if (s == "random-directions") return InitScheme::kRandomDirections;
    if (s == "perturbed-global-mean") return InitScheme::kPerturbedGlobalMean;
    throw std::invalid_argument("unknown init scheme: " + s);
}

struct FitConfig {
    int k = 1;
    double alpha = 1.0;
    int max_iters = 100;
    double rel_tol = 1e-5;
    std::uint64_t seed = 0;
    InitScheme init = InitScheme::kSeededTokens;
    double kappa_init = 10.0;
    bool deterministic = false;

    void validate() const {
        if (k < 1)
            throw std::invalid_argument("FitConfig: k must be >= 1");
        if (!(alpha > 0.0))
            throw std::invalid_argument("FitConfig: alpha must be > 0");
        if (max_iters < 1)
            throw std::invalid_argument("FitConfig: max_iters must be >= 1");
        if (!(rel_tol > 0.0))
            throw std::invalid_argument("FitConfig: rel_tol must be > 0");
        if (!(kappa_init > 0.0))
            throw std::invalid_argument("FitConfig: kappa_init must be > 0");
    }
};

namespace detail {

inline int env_thread_count() {
    const char* v = std::getenv("VMFMIX_THREADS");
    if (!v)
        return 1;
    const int n = std::atoi(v);
    return n > 1 ? n : 1;
}

// Run f(i) for i in [0, n). Work is chunked contiguously; every document is
// written independently, so the result does not depend on the thread count.
template <typename F>
void for_each_doc(Eigen::Index n, F&& f) {
    const int threads = env_thread_count();
    if (threads <= 1 || n < 2 * threads) {
        for (Eigen::Index i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    const Eigen::Index chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const Eigen::Index lo = t * chunk;
        const Eigen::Index hi = std::min(n, lo + chunk);
        if (lo >= hi)
            break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (Eigen::Index i = lo; i < hi; ++i)
                    f(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace detail

// --- E-step ---------------------------------------------------------------

// Responsibility sweep: pi_ijk proportional to exp(psi(phi_ik)) times the
// vMF density of token j under component k, normalized per token by
// log-sum-exp. Uses the phi currently stored in the state.
inline void update_responsibilities(const Corpus& corpus, const ModelParams& params,
                                    VariationalState& state) {
    const Eigen::Index k = params.k();
    Eigen::VectorXd log_norm(k);
    for (Eigen::Index c = 0; c < k; ++c)
        log_norm[c] = specfun::log_vmf_normalizer(int(params.dim()), params.kappa[c]);

    detail::for_each_doc(corpus.num_docs(), [&](Eigen::Index i) {
        Eigen::VectorXd bias(k);
        for (Eigen::Index c = 0; c < k; ++c)
            bias[c] = log_norm[c] + specfun::digamma(state.phi(i, c));

        Eigen::MatrixXd logp = corpus.doc(i).tokens * params.mu;  // n x K token dots
        logp.array().rowwise() *= params.kappa.transpose().array();
        logp.array().rowwise() += bias.transpose().array();
        if (!logp.allFinite())
            throw numeric_error("update_responsibilities: non-finite log density (doc '" +
                                corpus.doc(i).id + "')");

        auto& pi = state.pi[static_cast<std::size_t>(i)];
        const Eigen::VectorXd rowmax = logp.rowwise().maxCoeff();
        pi = (logp.colwise() - rowmax).array().exp();
        const Eigen::VectorXd rowsum = pi.rowwise().sum();
        pi.array().colwise() /= rowsum.array();
    });
}

// Dirichlet refresh from the current responsibilities: phi_ik = n_ik + alpha.
inline void update_phi(const Corpus& corpus, VariationalState& state, double alpha) {
    detail::for_each_doc(corpus.num_docs(), [&](Eigen::Index i) {
        state.phi.row(i) =
            state.pi[static_cast<std::size_t>(i)].colwise().sum().array() + alpha;
        state.phi0[i] = state.phi.row(i).sum();
    });
}

// One full E-step: a pi sweep against the stored phi, then the phi refresh.
inline VariationalState e_step(const Corpus& corpus, const ModelParams& params,
                               const VariationalState& state) {
    VariationalState next = state;
    update_responsibilities(corpus, params, next);
    update_phi(corpus, next, params.alpha);
    return next;
}

// --- M-step ---------------------------------------------------------------

struct MStepResult {
    Eigen::MatrixXd mu;       // D x K
    Eigen::VectorXd kappa;    // K
    std::vector<int> empty;   // components with n_k below kEmptyComponentCount
    int kappa_clamps = 0;
};

// Closed-form parameter update: mu_k is the normalized resultant and
// kappa_k the mean-resultant-length approximation
// (rbar D - rbar^3) / (1 - rbar^2), clamped to [0, kKappaMax]. Components
// with no effective mass are reported in `empty`; reseeding them needs
// token access and is handled by the fit loop.
inline MStepResult m_step(const SufficientStats& stats, Eigen::Index dim) {
    if (dim < 2)
        throw std::invalid_argument("m_step: dim must be >= 2");
    const Eigen::Index k = stats.n_k.size();
    MStepResult out;
    out.mu.setZero(dim, k);
    out.kappa.setZero(k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const double n = stats.n_k[c];
        const double rnorm = stats.r.col(c).norm();
        if (n < kEmptyComponentCount || rnorm < 1e-300) {
            out.mu(0, c) = 1.0;  // placeholder until the caller reseeds
            out.empty.push_back(int(c));
            continue;
        }
        out.mu.col(c) = stats.r.col(c) / rnorm;
        const double rbar = std::min(rnorm / n, 1.0);
        double kap;
        if (rbar >= 1.0 - 1e-12) {
            kap = kKappaMax + 1.0;  // collinear tokens; rbar -> 1 diverges
        } else {
            kap = rbar * (double(dim) - rbar * rbar) / (1.0 - rbar * rbar);
        }
        if (kap > kKappaMax) {
            kap = kKappaMax;
            ++out.kappa_clamps;  // degenerate-cluster diagnostic
        }
        out.kappa[c] = kap;
    }
    return out;
}

// --- ELBO -----------------------------------------------------------------

namespace detail {

// Entropy of the variational distribution for one document: the Dirichlet
// entropy plus the categorical entropy of its token responsibilities.
inline double doc_entropy(const VariationalState& state, Eigen::Index i) {
    const Eigen::Index k = state.k();
    double h = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
        const double p = state.phi(i, c);
        h += specfun::log_gamma(p) - (p - 1.0) * specfun::digamma(p);
    }
    h -= specfun::log_gamma(state.phi0[i]);
    h += (state.phi0[i] - double(k)) * specfun::digamma(state.phi0[i]);
    const auto& pi = state.pi[static_cast<std::size_t>(i)];
    // 0 log 0 = 0
    h -= (pi.array() > 0.0).select(pi.array() * pi.array().log(), 0.0).sum();
    return h;
}

}  // namespace detail

// Variational lower bound on the log evidence, exact including the
// Dirichlet normalizer, so it is directly comparable against a quadrature
// of the integrated likelihood. stats must equal
// accumulate_stats(corpus, state).
inline double elbo(const Corpus& corpus, const ModelParams& params,
                   const VariationalState& state, const SufficientStats& stats) {
    const Eigen::Index k = params.k();
    const double alpha = params.alpha;
    const Eigen::Index n_docs = corpus.num_docs();

    double value =
        double(n_docs) *
        (specfun::log_gamma(double(k) * alpha) - double(k) * specfun::log_gamma(alpha));

    for (Eigen::Index i = 0; i < n_docs; ++i) {
        value += detail::doc_entropy(state, i);
        const double psi0 = specfun::digamma(state.phi0[i]);
        for (Eigen::Index c = 0; c < k; ++c)
            value += (alpha - 1.0 + stats.n_ik(i, c)) *
                     (specfun::digamma(state.phi(i, c)) - psi0);
    }
    for (Eigen::Index c = 0; c < k; ++c) {
        value += stats.n_k[c] * specfun::log_vmf_normalizer(int(params.dim()), params.kappa[c]);
        value += params.kappa[c] * params.mu.col(c).dot(stats.r.col(c));
    }
    if (!std::isfinite(value))
        throw numeric_error("elbo: non-finite bound");
    return value;
}

// Per-document share of the bound (the data and Dirichlet terms restricted
// to document i). Summing over documents reproduces elbo(); the frozen
// E-step used for feature extraction monitors this quantity.
inline double doc_elbo(const Corpus& corpus, const ModelParams& params,
                       const VariationalState& state, Eigen::Index i) {
    const Eigen::Index k = params.k();
    const double alpha = params.alpha;
    double value =
        specfun::log_gamma(double(k) * alpha) - double(k) * specfun::log_gamma(alpha);
    value += detail::doc_entropy(state, i);
    const auto& pi = state.pi[static_cast<std::size_t>(i)];
    const Eigen::VectorXd n_i = pi.colwise().sum();
    const double psi0 = specfun::digamma(state.phi0[i]);
    for (Eigen::Index c = 0; c < k; ++c) {
        value += (alpha - 1.0 + n_i[c]) * (specfun::digamma(state.phi(i, c)) - psi0);
        const Eigen::VectorXd r_ic = corpus.doc(i).tokens.transpose() * pi.col(c);
        value += n_i[c] * specfun::log_vmf_normalizer(int(params.dim()), params.kappa[c]);
        value += params.kappa[c] * params.mu.col(c).dot(r_ic);
    }
    return value;
}

// --- Initialization and the fit loop ---------------------------------------

// Initial mean directions: K distinct tokens (default), uniform random
// directions, or jittered copies of the global mean direction. kappa
// starts at kappa_init everywhere.
inline ModelParams init_params(const Corpus& corpus, const FitConfig& config) {
    config.validate();
    const Eigen::Index dim = corpus.dim();
    ModelParams params;
    params.alpha = config.alpha;
    params.mu.resize(dim, config.k);
    params.kappa.setConstant(config.k, config.kappa_init);

    Rng rng = Rng(config.seed).split(0);
    switch (config.init) {
        case InitScheme::kSeededTokens: {
            const Eigen::Index total = corpus.total_tokens();
            if (total < config.k)
                throw std::invalid_argument("init_params: fewer tokens than components");
            std::vector<Eigen::Index> picks;
            while (picks.size() < static_cast<std::size_t>(config.k)) {
                const Eigen::Index t = Eigen::Index(rng.uniform() * double(total));
                bool dup = false;
                for (auto p : picks)
                    dup |= (p == t);
                if (!dup)
                    picks.push_back(std::min(t, total - 1));
            }
            for (int c = 0; c < config.k; ++c) {
                Eigen::Index rem = picks[static_cast<std::size_t>(c)];
                for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
                    if (rem < corpus.doc(i).size()) {
                        params.mu.col(c) = corpus.doc(i).tokens.row(rem).transpose();
                        break;
                    }
                    rem -= corpus.doc(i).size();
                }
            }
            break;
        }
        case InitScheme::kRandomDirections: {
            for (int c = 0; c < config.k; ++c) {
                for (Eigen::Index r = 0; r < dim; ++r)
                    params.mu(r, c) = rng.normal();
                params.mu.col(c).normalize();
            }
            break;
        }
        case InitScheme::kPerturbedGlobalMean: {
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
            for (Eigen::Index i = 0; i < corpus.num_docs(); ++i)
                mean += corpus.doc(i).tokens.colwise().sum().transpose();
            if (mean.norm() < 1e-12) {
                for (Eigen::Index r = 0; r < dim; ++r)
                    mean[r] = rng.normal();
            }
            mean.normalize();
            for (int c = 0; c < config.k; ++c) {
                Eigen::VectorXd jitter(dim);
                for (Eigen::Index r = 0; r < dim; ++r)
                    jitter[r] = rng.normal();
                params.mu.col(c) = (mean + 0.1 * jitter.normalized()).normalized();
            }
            break;
        }
    }
    return params;
}

// Uniform responsibilities and phi_ik = alpha + N_i / K.
inline VariationalState init_state(const Corpus& corpus, const FitConfig& config) {
    config.validate();
    VariationalState state;
    state.phi.resize(corpus.num_docs(), config.k);
    state.phi0.resize(corpus.num_docs());
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        const double n_i = double(corpus.doc(i).size());
        state.pi.emplace_back(
            Eigen::MatrixXd::Constant(corpus.doc(i).size(), config.k, 1.0 / config.k));
        state.phi.row(i).setConstant(config.alpha + n_i / config.k);
        state.phi0[i] = state.phi.row(i).sum();
    }
    return state;
}

struct FitResult {
    ModelParams params;
    VariationalState state;
    FitReport report;
};

namespace detail {

// Reseed empty components from the tokens the current state explains
// worst (lowest maximum responsibility).
inline void rescue_empty_components(const Corpus& corpus, const VariationalState& state,
                                    const std::vector<int>& empty, double kappa_init,
                                    ModelParams& params) {
    if (empty.empty())
        return;
    std::vector<std::pair<double, std::pair<Eigen::Index, Eigen::Index>>> worst;
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        const auto& pi = state.pi[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < pi.rows(); ++j)
            worst.push_back({pi.row(j).maxCoeff(), {i, j}});
    }
    std::sort(worst.begin(), worst.end());
    std::size_t next = 0;
    for (int c : empty) {
        const auto [i, j] = worst[std::min(next++, worst.size() - 1)].second;
        params.mu.col(c) = corpus.doc(i).tokens.row(j).transpose();
        params.kappa[c] = kappa_init;
    }
}

}  // namespace detail

// Full variational EM: initialize, alternate E/M steps, score the bound
// each iteration, stop when the relative improvement drops below rel_tol
// or max_iters is reached. With a fixed seed the result is reproducible
// bit for bit on the same platform regardless of VMFMIX_THREADS.
inline FitResult fit(const Corpus& corpus, const FitConfig& config) {
    config.validate();
    const auto t_start = std::chrono::steady_clock::now();

    FitResult result;
    result.params = init_params(corpus, config);
    result.state = init_state(corpus, config);

    double prev = 0.0;
    for (int iter = 0; iter < config.max_iters; ++iter) {
        const auto t_iter = std::chrono::steady_clock::now();
        result.state = e_step(corpus, result.params, result.state);
        const SufficientStats stats = accumulate_stats(corpus, result.state);

        MStepResult ms = m_step(stats, corpus.dim());
        result.params.mu = std::move(ms.mu);
        result.params.kappa = std::move(ms.kappa);
        result.report.kappa_clamps += ms.kappa_clamps;
        if (!ms.empty.empty()) {
            detail::rescue_empty_components(corpus, result.state, ms.empty, config.kappa_init,
                                            result.params);
            result.report.rescued_components += int(ms.empty.size());
        }

        const double bound = elbo(corpus, result.params, result.state, stats);
        result.report.elbo_trace.push_back(bound);
        result.report.iter_wall_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_iter)
                .count());

        if (iter > 0 && (bound - prev) / std::abs(prev) < config.rel_tol) {
            result.report.converged = true;
            prev = bound;
            break;
        }
        prev = bound;
    }
    result.report.iterations = int(result.report.elbo_trace.size());
    result.report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace vmfmix
