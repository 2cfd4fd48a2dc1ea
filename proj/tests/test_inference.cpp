// Apache License, Version 2.0, refer to LICENSE.txt

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <random>

#include "vmfmix/generate.hpp"
#include "vmfmix/hungarian.hpp"
#include "vmfmix/inference.hpp"
#include "oracles.hpp"

using namespace vmfmix;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Corpus tiny_corpus(const Eigen::MatrixXd& tokens) {
    Document d;
    d.id = "doc";
    d.tokens = tokens;
    return Corpus({d});
}

ModelParams make_params(double alpha, const Eigen::MatrixXd& mu, const Eigen::VectorXd& kappa) {
    ModelParams p;
    p.alpha = alpha;
    p.mu = mu;
    p.kappa = kappa;
    p.validate();
    return p;
}

VariationalState make_state(const std::vector<Eigen::MatrixXd>& pi, const Eigen::MatrixXd& phi) {
    VariationalState s;
    s.pi = pi;
    s.phi = phi;
    s.phi0 = phi.rowwise().sum();
    return s;
}

// The hand-set scoring instance used across several tests: one document,
// two tokens in R^3, two components.
struct Instance {
    Corpus corpus;
    ModelParams params;
    VariationalState state;

    Instance()
        : corpus([] {
              Eigen::MatrixXd t(2, 3);
              t << 1, 0, 0, 0, 1, 0;
              return tiny_corpus(t);
          }()),
          params([] {
              Eigen::MatrixXd mu(3, 2);
              mu.col(0) = Eigen::Vector3d(1, 0, 0);
              mu.col(1) = Eigen::Vector3d(0, 0, 1);
              Eigen::VectorXd kappa(2);
              kappa << 2.0, 5.0;
              return make_params(1.2, mu, kappa);
          }()) {
        Eigen::MatrixXd pi(2, 2);
        pi << 0.7, 0.3, 0.4, 0.6;
        Eigen::MatrixXd phi(1, 2);
        phi << 1.5, 2.5;
        state = make_state({pi}, phi);
    }
};

double elbo_of(const Corpus& corpus, const ModelParams& params, const VariationalState& state) {
    return elbo(corpus, params, state, accumulate_stats(corpus, state));
}

// Brute-force evaluation of the same bound: enumerate the 4 joint token
// assignments, integrate the Dirichlet part over the 1-simplex with
// composite Simpson. Independent of everything in the library except the
// closed-form d=3 normalizer from the oracle header.
double elbo_bruteforce_k2(const Instance& inst) {
    const double alpha = inst.params.alpha;
    const auto& pi = inst.state.pi[0];
    const double phi1 = inst.state.phi(0, 0), phi2 = inst.state.phi(0, 1);
    double logvmf[2][2];
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
            logvmf[j][k] = oracles::log_vmf_normalizer_3(inst.params.kappa[k]) +
                           inst.params.kappa[k] *
                               inst.corpus.doc(0).tokens.row(j).dot(inst.params.mu.col(k));

    const double log_beta_q = std::lgamma(phi1) + std::lgamma(phi2) - std::lgamma(phi1 + phi2);
    const double log_dir_norm = std::lgamma(2.0 * alpha) - 2.0 * std::lgamma(alpha);

    double total = 0.0;
    for (int z1 = 0; z1 < 2; ++z1)
        for (int z2 = 0; z2 < 2; ++z2) {
            const double qz = pi(0, z1) * pi(1, z2);
            auto integrand = [&](double t) -> double {
                if (t <= 0.0 || t >= 1.0)
                    return 0.0;
                const double th[2] = {t, 1.0 - t};
                const double logq_theta =
                    (phi1 - 1.0) * std::log(t) + (phi2 - 1.0) * std::log(1.0 - t) - log_beta_q;
                const double logp = log_dir_norm + (alpha - 1.0) * (std::log(t) + std::log(1 - t)) +
                                    std::log(th[z1]) + logvmf[0][z1] + std::log(th[z2]) +
                                    logvmf[1][z2];
                const double logq = logq_theta + std::log(pi(0, z1)) + std::log(pi(1, z2));
                return std::exp(logq_theta) * (logp - logq);
            };
            const int n = 200000;  // Simpson panels
            const double h = 1.0 / n;
            double acc = integrand(0.0) + integrand(1.0);
            for (int i = 1; i < n; ++i)
                acc += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
            total += qz * acc * h / 3.0;
        }
    return total;
}

}  // namespace

TEST_CASE("e_step symmetric components give uniform responsibilities") {
    Eigen::MatrixXd t(3, 3);
    t << 1, 0, 0, 0, 1, 0, 0.6, 0.8, 0;
    Corpus corpus = tiny_corpus(t);

    Eigen::MatrixXd mu(3, 2);
    mu.col(0) = Eigen::Vector3d(0, 0, 1);
    mu.col(1) = Eigen::Vector3d(0, 0, 1);
    Eigen::VectorXd kappa(2);
    kappa << 7.5, 7.5;
    const auto params = make_params(1.0, mu, kappa);

    FitConfig config;
    config.k = 2;
    auto state = init_state(corpus, config);
    state = e_step(corpus, params, state);
    state.validate(corpus);
    for (Eigen::Index j = 0; j < 3; ++j) {
        REQUIRE_THAT(state.pi[0](j, 0), WithinAbs(0.5, 1e-12));
        REQUIRE_THAT(state.pi[0](j, 1), WithinAbs(0.5, 1e-12));
    }
}

TEST_CASE("e_step with uniform densities weighs by exp(digamma(phi))") {
    Eigen::MatrixXd t(4, 3);
    t << 1, 0, 0, 0, 1, 0, 0, 0, 1, 0.6, 0, 0.8;
    Corpus corpus = tiny_corpus(t);

    Eigen::MatrixXd mu(3, 2);
    mu.col(0) = Eigen::Vector3d(1, 0, 0);
    mu.col(1) = Eigen::Vector3d(0, 1, 0);
    Eigen::VectorXd kappa = Eigen::VectorXd::Zero(2);
    const auto params = make_params(1.0, mu, kappa);

    Eigen::MatrixXd phi(1, 2);
    phi << 1.0, 3.0;
    auto state = make_state({Eigen::MatrixXd::Constant(4, 2, 0.5)}, phi);
    update_responsibilities(corpus, params, state);

    // frozen: exp(psi(1)) / (exp(psi(1)) + exp(psi(3))) and its complement
    for (Eigen::Index j = 0; j < 4; ++j) {
        REQUIRE_THAT(state.pi[0](j, 0), WithinAbs(0.18242552380635634, 1e-13));
        REQUIRE_THAT(state.pi[0](j, 1), WithinAbs(0.81757447619364366, 1e-13));
    }
}

TEST_CASE("e_step with K=1 is forced") {
    Eigen::MatrixXd t(5, 4);
    t.setZero();
    for (int j = 0; j < 5; ++j)
        t(j, j % 4) = 1.0;
    Corpus corpus = tiny_corpus(t);

    Eigen::MatrixXd mu(4, 1);
    mu.col(0) = Eigen::Vector4d(0.5, 0.5, 0.5, 0.5);
    Eigen::VectorXd kappa(1);
    kappa << 3.0;
    const auto params = make_params(0.7, mu, kappa);

    FitConfig config;
    config.k = 1;
    config.alpha = 0.7;
    auto state = e_step(corpus, params, init_state(corpus, config));
    REQUIRE((state.pi[0].array() == 1.0).all());
    REQUIRE_THAT(state.phi(0, 0), WithinAbs(5.0 + 0.7, 1e-12));
}

TEST_CASE("m_step collinear tokens clamp kappa") {
    SufficientStats stats;
    stats.n_ik.resize(1, 1);
    stats.n_ik << 2.0;
    stats.n_k.resize(1);
    stats.n_k << 2.0;
    stats.r.resize(3, 1);
    stats.r << 2.0, 0.0, 0.0;

    const auto out = m_step(stats, 3);
    REQUIRE(out.empty.empty());
    REQUIRE_THAT((out.mu.col(0) - Eigen::Vector3d(1, 0, 0)).norm(), WithinAbs(0.0, 1e-12));
    REQUIRE(out.kappa[0] == kKappaMax);
}

TEST_CASE("m_step concentration update pinned values") {
    // rbar = 0.5 in D=3
    SufficientStats stats;
    stats.n_ik.resize(1, 1);
    stats.n_ik << 2.0;
    stats.n_k.resize(1);
    stats.n_k << 2.0;
    stats.r.resize(3, 1);
    stats.r << 1.0, 0.0, 0.0;
    auto out = m_step(stats, 3);
    REQUIRE_THAT(out.kappa[0], WithinRel(1.8333333333333333, 1e-14));

    // two orthogonal unit tokens fully assigned: rbar = sqrt(2)/2
    stats.r << 1.0, 1.0, 0.0;
    out = m_step(stats, 3);
    REQUIRE_THAT((out.mu.col(0) - Eigen::Vector3d(1, 1, 0).normalized()).norm(),
                 WithinAbs(0.0, 1e-14));
    REQUIRE_THAT(out.kappa[0], WithinRel(3.5355339059327376, 1e-13));
}

TEST_CASE("m_step flags empty components") {
    SufficientStats stats;
    stats.n_ik.resize(1, 2);
    stats.n_ik << 3.0, 0.0;
    stats.n_k.resize(2);
    stats.n_k << 3.0, 0.0;
    stats.r.resize(3, 2);
    stats.r.setZero();
    stats.r(0, 0) = 1.5;

    const auto out = m_step(stats, 3);
    REQUIRE(out.empty == std::vector<int>{1});
}

TEST_CASE("concentration approximation vs exact inverse (frozen table)") {
    // rel_err = (banerjee - invert_bessel_ratio) / invert_bessel_ratio,
    // computed once with an extended-precision solver and frozen here.
    struct Row {
        int d;
        double rbar, rel;
    };
    const Row table[] = {
        {3, 0.2, 0.0027644859}, {3, 0.5, 0.020357438},    {3, 0.8, 0.049367281},
        {10, 0.2, 0.0025860645}, {10, 0.5, 0.012924183},  {10, 0.8, 0.01465133},
        {50, 0.2, 0.00069017402}, {50, 0.5, 0.00292892},  {50, 0.8, 0.0028350883},
    };
    for (const auto& row : table) {
        const double hat =
            row.rbar * (row.d - row.rbar * row.rbar) / (1.0 - row.rbar * row.rbar);
        const double exact = specfun::invert_bessel_ratio(row.d, row.rbar);
        const double rel = (hat - exact) / exact;
        INFO("d=" << row.d << " rbar=" << row.rbar);
        REQUIRE_THAT(rel, WithinAbs(row.rel, 1e-7));
        REQUIRE(std::abs(rel) <= (row.d >= 10 ? 0.05 : 0.10));
    }
}

TEST_CASE("elbo matches independent bruteforce on the hand-set instance") {
    Instance inst;
    const double got = elbo_of(inst.corpus, inst.params, inst.state);
    // frozen from the 50-digit enumeration + quadrature oracle
    REQUIRE_THAT(got, WithinAbs(-7.4553163699579662, 1e-12));
    REQUIRE_THAT(got, WithinAbs(elbo_bruteforce_k2(inst), 1e-7));
}

TEST_CASE("elbo for K=1 reduces to the data term") {
    Eigen::MatrixXd t(3, 3);
    t << 1, 0, 0, 0, 1, 0, 0, 0, 1;
    Corpus corpus = tiny_corpus(t);

    Eigen::MatrixXd mu(3, 1);
    mu.col(0) = Eigen::Vector3d(1, 1, 1).normalized();
    Eigen::VectorXd kappa(1);
    kappa << 4.0;
    const auto params = make_params(1.3, mu, kappa);

    FitConfig config;
    config.k = 1;
    config.alpha = 1.3;
    const auto state = e_step(corpus, params, init_state(corpus, config));
    const auto stats = accumulate_stats(corpus, state);

    // With K=1 both entropy parts and the Dirichlet terms vanish exactly.
    const double expected = 3.0 * oracles::log_vmf_normalizer_3(4.0) +
                            4.0 * mu.col(0).dot(Eigen::Vector3d(1, 1, 1));
    REQUIRE_THAT(elbo(corpus, params, state, stats), WithinAbs(expected, 1e-12));
}

TEST_CASE("elbo never exceeds the integrated likelihood (quadrature)") {
    // log p(X) for this instance, frozen from extended-precision quadrature.
    const double log_px = -3.1431865048477482;

    Eigen::MatrixXd t(2, 3);
    t << 1, 0, 0, 0.6, 0.8, 0;
    Corpus corpus = tiny_corpus(t);

    Eigen::MatrixXd mu(3, 2);
    mu.col(0) = Eigen::Vector3d(1, 0, 0);
    mu.col(1) = Eigen::Vector3d(0, 1, 0);
    Eigen::VectorXd kappa(2);
    kappa << 3.0, 1.5;
    const auto params = make_params(1.7, mu, kappa);

    FitConfig config;
    config.k = 2;
    config.alpha = 1.7;
    auto state = init_state(corpus, config);
    for (int sweep = 0; sweep < 30; ++sweep) {
        state = e_step(corpus, params, state);
        const double bound = elbo_of(corpus, params, state);
        REQUIRE(bound <= log_px + 1e-9);
    }
    // after convergence of q the bound should be close but still below
    REQUIRE(elbo_of(corpus, params, state) > log_px - 0.5);
}

TEST_CASE("doc_elbo sums to elbo") {
    const auto [corpus, truth] = sample_corpus([] {
        GenSpec g;
        g.k = 3;
        g.dim = 5;
        g.num_docs = 7;
        g.tokens_min = 2;
        g.tokens_max = 9;
        g.alpha = 0.8;
        g.kappa = 12.0;
        g.seed = 21;
        return g;
    }());
    FitConfig config;
    config.k = 3;
    config.alpha = 0.8;
    config.seed = 5;
    auto params = init_params(corpus, config);
    auto state = e_step(corpus, params, init_state(corpus, config));

    double sum = 0.0;
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i)
        sum += doc_elbo(corpus, params, state, i);
    REQUIRE_THAT(sum, WithinRel(elbo_of(corpus, params, state), 1e-10));
}

TEST_CASE("E-step sub-updates never decrease the bound") {
    const auto [corpus, truth] = sample_corpus([] {
        GenSpec g;
        g.k = 4;
        g.dim = 8;
        g.num_docs = 12;
        g.tokens_min = 3;
        g.tokens_max = 20;
        g.kappa = 20.0;
        g.seed = 99;
        return g;
    }());
    FitConfig config;
    config.k = 4;
    config.seed = 3;
    auto params = init_params(corpus, config);
    auto state = init_state(corpus, config);

    for (int iter = 0; iter < 8; ++iter) {
        const double before = elbo_of(corpus, params, state);
        update_responsibilities(corpus, params, state);
        const double after_pi = elbo_of(corpus, params, state);
        REQUIRE(after_pi >= before - 1e-9);
        update_phi(corpus, state, params.alpha);
        const double after_phi = elbo_of(corpus, params, state);
        REQUIRE(after_phi >= after_pi - 1e-9);

        const auto stats = accumulate_stats(corpus, state);
        auto ms = m_step(stats, corpus.dim());
        REQUIRE(ms.empty.empty());
        params.mu = ms.mu;
        params.kappa = ms.kappa;
    }
}

TEST_CASE("updated responsibilities are per-token optimal") {
    Instance inst;
    auto state = inst.state;
    update_responsibilities(inst.corpus, inst.params, state);  // phi fixed
    const double base = elbo_of(inst.corpus, inst.params, state);

    std::mt19937 rng(2718);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 200; ++trial) {
        auto perturbed = state;
        const Eigen::Index j = trial % 2;
        Eigen::Vector2d dir(gauss(rng), gauss(rng));
        dir.array() -= dir.mean();  // tangent to the simplex
        Eigen::Vector2d row = perturbed.pi[0].row(j).transpose() + 1e-3 * dir;
        row = row.cwiseMax(0.0);
        row /= row.sum();
        perturbed.pi[0].row(j) = row.transpose();
        REQUIRE(elbo_of(inst.corpus, inst.params, perturbed) <= base + 1e-9);
    }
}

TEST_CASE("mean directions are optimal given kappa and responsibilities") {
    const auto [corpus, truth] = sample_corpus([] {
        GenSpec g;
        g.k = 3;
        g.dim = 6;
        g.num_docs = 10;
        g.tokens_min = 5;
        g.tokens_max = 15;
        g.kappa = 30.0;
        g.seed = 1234;
        return g;
    }());
    FitConfig config;
    config.k = 3;
    config.seed = 8;
    auto params = init_params(corpus, config);
    auto state = e_step(corpus, params, init_state(corpus, config));
    const auto stats = accumulate_stats(corpus, state);
    auto ms = m_step(stats, corpus.dim());
    params.mu = ms.mu;
    params.kappa = ms.kappa;
    const double best = elbo(corpus, params, state, stats);

    std::mt19937 rng(55);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 100; ++trial) {
        auto worse = params;
        const int c = trial % 3;
        Eigen::VectorXd dir(corpus.dim());
        for (Eigen::Index r = 0; r < dir.size(); ++r)
            dir[r] = gauss(rng);
        worse.mu.col(c) = dir.normalized();
        REQUIRE(elbo(corpus, worse, state, stats) <= best + 1e-9);
    }
}

TEST_CASE("phi update is stationary for the bound") {
    const auto [corpus, truth] = sample_corpus([] {
        GenSpec g;
        g.k = 2;
        g.dim = 4;
        g.num_docs = 5;
        g.tokens_min = 4;
        g.tokens_max = 9;
        g.seed = 777;
        g.kappa = 15.0;
        return g;
    }());
    FitConfig config;
    config.k = 2;
    config.seed = 31;
    auto params = init_params(corpus, config);
    auto state = e_step(corpus, params, init_state(corpus, config));  // phi = n + alpha

    auto grad_at = [&](VariationalState s) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < corpus.num_docs(); ++i)
            for (Eigen::Index c = 0; c < 2; ++c) {
                const double h = 1e-4 * s.phi(i, c);
                auto up = s, dn = s;
                up.phi(i, c) += h;
                up.phi0[i] += h;
                dn.phi(i, c) -= h;
                dn.phi0[i] -= h;
                total += std::abs(elbo_of(corpus, params, up) - elbo_of(corpus, params, dn)) /
                         (2.0 * h);
            }
        return total;
    };

    const double at_update = grad_at(state);
    auto shifted = state;
    shifted.phi.array() += 0.5;
    shifted.phi0 = shifted.phi.rowwise().sum();
    const double away = grad_at(shifted);
    REQUIRE(away > 0.0);
    REQUIRE(at_update <= 1e-5 * away);
}

TEST_CASE("fit with K=1 recovers the global resultant in one iteration") {
    Eigen::MatrixXd t(3, 3);
    t << 1, 0, 0, 0, 1, 0, 0.6, 0.8, 0;
    Corpus corpus = tiny_corpus(t);

    FitConfig config;
    config.k = 1;
    config.max_iters = 1;
    const auto result = fit(corpus, config);

    Eigen::Vector3d resultant = t.row(0) + t.row(1) + t.row(2);
    resultant.normalize();
    REQUIRE_THAT((result.params.mu.col(0) - resultant).norm(), WithinAbs(0.0, 1e-12));
    REQUIRE(result.report.iterations == 1);
}

TEST_CASE("fit ELBO trace ascends within tolerance") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        GenSpec g;
        g.k = 3;
        g.dim = 10;
        g.num_docs = 40;
        g.tokens_min = 5;
        g.tokens_max = 25;
        g.kappa = 35.0;
        g.seed = seed;
        const auto [corpus, truth] = sample_corpus(g);

        FitConfig config;
        config.k = 3;
        config.seed = seed + 10;
        config.max_iters = 60;
        const auto result = fit(corpus, config);
        const auto& trace = result.report.elbo_trace;
        REQUIRE(int(trace.size()) == result.report.iterations);
        for (std::size_t i = 1; i < trace.size(); ++i)
            REQUIRE(trace[i] >= trace[i - 1] - 1e-6 * std::abs(trace[i - 1]));
    }
}

TEST_CASE("fit recovers planted components") {
    GenSpec g;
    g.k = 3;
    g.dim = 10;
    g.num_docs = 100;
    g.tokens_min = 20;
    g.tokens_max = 20;
    g.kappa = 50.0;
    g.seed = 42;
    const auto [corpus, truth] = sample_corpus(g);

    FitConfig config;
    config.k = 3;
    config.seed = 7;
    const auto result = fit(corpus, config);

    Eigen::MatrixXd cost(3, 3);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            cost(a, b) = -result.params.mu.col(a).dot(truth.params.mu.col(b));
    const auto match = min_cost_assignment(cost);
    for (int a = 0; a < 3; ++a) {
        REQUIRE(-cost(a, match[a]) >= 0.98);
        const double kap_rel =
            std::abs(result.params.kappa[a] - truth.params.kappa[match[a]]) /
            truth.params.kappa[match[a]];
        REQUIRE(kap_rel <= 0.25);
    }
}

TEST_CASE("fit is deterministic and thread-count invariant") {
    GenSpec g;
    g.k = 2;
    g.dim = 6;
    g.num_docs = 24;
    g.tokens_min = 4;
    g.tokens_max = 14;
    g.kappa = 25.0;
    g.seed = 5;
    const auto [corpus, truth] = sample_corpus(g);

    FitConfig config;
    config.k = 2;
    config.seed = 77;
    config.deterministic = true;
    const auto a = fit(corpus, config);
    const auto b = fit(corpus, config);
    REQUIRE(a.params.mu == b.params.mu);
    REQUIRE(a.params.kappa == b.params.kappa);
    REQUIRE(a.report.elbo_trace == b.report.elbo_trace);

    setenv("VMFMIX_THREADS", "4", 1);
    const auto c = fit(corpus, config);
    unsetenv("VMFMIX_THREADS");
    REQUIRE(a.params.mu == c.params.mu);
    REQUIRE(a.params.kappa == c.params.kappa);
    REQUIRE(a.report.elbo_trace == c.report.elbo_trace);
}

TEST_CASE("fit permutation equivariance under component relabeling") {
    GenSpec g;
    g.k = 3;
    g.dim = 5;
    g.num_docs = 15;
    g.tokens_min = 4;
    g.tokens_max = 10;
    g.kappa = 20.0;
    g.seed = 17;
    const auto [corpus, truth] = sample_corpus(g);

    FitConfig config;
    config.k = 3;
    config.seed = 3;
    config.deterministic = true;
    auto params = init_params(corpus, config);
    auto state = init_state(corpus, config);

    auto permuted = params;
    const int perm[3] = {2, 0, 1};
    for (int c = 0; c < 3; ++c) {
        permuted.mu.col(perm[c]) = params.mu.col(c);
        permuted.kappa[perm[c]] = params.kappa[c];
    }
    auto state_p = state;  // symmetric across components

    for (int iter = 0; iter < 5; ++iter) {
        state = e_step(corpus, params, state);
        auto ms = m_step(accumulate_stats(corpus, state), corpus.dim());
        params.mu = ms.mu;
        params.kappa = ms.kappa;

        state_p = e_step(corpus, permuted, state_p);
        auto msp = m_step(accumulate_stats(corpus, state_p), corpus.dim());
        permuted.mu = msp.mu;
        permuted.kappa = msp.kappa;
    }
    for (int c = 0; c < 3; ++c) {
        REQUIRE_THAT((params.mu.col(c) - permuted.mu.col(perm[c])).norm(), WithinAbs(0.0, 1e-9));
        REQUIRE_THAT(params.kappa[c], WithinAbs(permuted.kappa[perm[c]], 1e-9));
    }
}

TEST_CASE("empty components are rescued") {
    // All tokens identical: the second component starves immediately.
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(6, 3);
    t.col(0).setOnes();
    Corpus corpus = tiny_corpus(t);

    FitConfig config;
    config.k = 2;
    config.seed = 1;
    config.max_iters = 10;
    const auto result = fit(corpus, config);
    REQUIRE(result.report.kappa_clamps >= 1);
    REQUIRE(result.params.kappa.maxCoeff() == kKappaMax);
    REQUIRE_THAT((result.params.mu.col(0) - Eigen::Vector3d(1, 0, 0)).norm(),
                 WithinAbs(0.0, 1e-9));
    for (const double v : result.report.elbo_trace)
        REQUIRE(std::isfinite(v));
}

TEST_CASE("fit rejects invalid configs") {
    Eigen::MatrixXd t(2, 3);
    t << 1, 0, 0, 0, 1, 0;
    Corpus corpus = tiny_corpus(t);

    FitConfig config;
    config.k = 0;
    REQUIRE_THROWS_AS(fit(corpus, config), std::invalid_argument);
    config.k = 5;  // more components than tokens
    REQUIRE_THROWS_AS(fit(corpus, config), std::invalid_argument);
    config.k = 1;
    config.rel_tol = 0.0;
    REQUIRE_THROWS_AS(fit(corpus, config), std::invalid_argument);
}

TEST_CASE("e_step stays finite at the kappa clamp") {
    // The densest supported regime: kappa at its cap in a 300-dimensional
    // space. Everything must stay finite end to end.
    Eigen::MatrixXd t(4, 300);
    t.setZero();
    for (int j = 0; j < 4; ++j)
        t(j, j) = 1.0;
    Corpus corpus = tiny_corpus(t);

    ModelParams params;
    params.alpha = 1.0;
    params.mu.setZero(300, 2);
    params.mu(0, 0) = 1.0;
    params.mu(1, 1) = 1.0;
    params.kappa = Eigen::VectorXd::Constant(2, kKappaMax);
    params.validate();

    FitConfig config;
    config.k = 2;
    auto state = e_step(corpus, params, init_state(corpus, config));
    state.validate(corpus);
    const double bound = elbo(corpus, params, state, accumulate_stats(corpus, state));
    REQUIRE(std::isfinite(bound));
}

TEST_CASE("fit at embedding scale: D=300, high concentration") {
    ModelParams true_params;
    true_params.alpha = 1.0;
    true_params.mu.setZero(300, 2);
    true_params.mu(0, 0) = 1.0;
    true_params.mu(5, 1) = 1.0;
    true_params.kappa = Eigen::VectorXd::Constant(2, 800.0);

    GenSpec g;
    g.k = 2;
    g.dim = 300;
    g.num_docs = 30;
    g.tokens_min = 10;
    g.tokens_max = 10;
    g.true_params = true_params;
    g.seed = 12;
    const auto [corpus, truth] = sample_corpus(g);

    FitConfig config;
    config.k = 2;
    config.seed = 4;
    const auto result = fit(corpus, config);
    for (const double v : result.report.elbo_trace)
        REQUIRE(std::isfinite(v));

    Eigen::MatrixXd cost(2, 2);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            cost(a, b) = -result.params.mu.col(a).dot(true_params.mu.col(b));
    const auto match = min_cost_assignment(cost);
    for (int a = 0; a < 2; ++a) {
        REQUIRE(-cost(a, match[a]) >= 0.98);
        const double kap_rel = std::abs(result.params.kappa[a] - 800.0) / 800.0;
        REQUIRE(kap_rel <= 0.25);
    }
}
