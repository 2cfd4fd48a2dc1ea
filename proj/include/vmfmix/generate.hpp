// Apache License, Version 2.0, refer to LICENSE.txt
//
// Synthetic corpora drawn from the generative process: per-document
// Dirichlet proportions, categorical component picks per token, vMF
// emission. Used for recovery experiments and the acceptance suite.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmfmix/core.hpp"
#include "vmfmix/rng.hpp"

namespace vmfmix {

struct GenSpec {
    int k = 1;
    int dim = 2;
    int num_docs = 1;
    int tokens_min = 1;
    int tokens_max = 1;
    double alpha = 1.0;
    double kappa = 50.0;  // used when true_params is not given
    std::optional<ModelParams> true_params;
    std::uint64_t seed = 0;
    std::string label;          // stamped on every document when non-empty
    std::string id_prefix = "d";

    void validate() const {
        if (k < 1 || dim < 2 || num_docs < 1 || tokens_min < 1 || tokens_max < tokens_min)
            throw std::invalid_argument("GenSpec: invalid counts");
        if (!(alpha > 0.0) || !(kappa >= 0.0))
            throw std::invalid_argument("GenSpec: alpha must be > 0 and kappa >= 0");
        if (true_params) {
            true_params->validate();
            if (true_params->k() != k || true_params->dim() != dim)
                throw std::invalid_argument("GenSpec: true_params shape mismatch");
        }
    }
};

struct GroundTruth {
    Eigen::MatrixXd theta;            // num_docs x K
    std::vector<std::vector<int>> z;  // per document, per token, 0-based
    ModelParams params;
};

// Normalized Gamma draws.
inline Eigen::VectorXd sample_dirichlet(double alpha, int k, Rng& rng) {
    if (!(alpha > 0.0) || k < 1)
        throw std::invalid_argument("sample_dirichlet: alpha > 0 and k >= 1 required");
    Eigen::VectorXd v(k);
    for (int c = 0; c < k; ++c)
        v[c] = rng.gamma(alpha);
    const double s = v.sum();
    if (s <= 0.0)
        return Eigen::VectorXd::Constant(k, 1.0 / k);
    return v / s;
}

inline Eigen::VectorXd sample_uniform_direction(Eigen::Index dim, Rng& rng) {
    Eigen::VectorXd v(dim);
    do {
        for (Eigen::Index r = 0; r < dim; ++r)
            v[r] = rng.normal();
    } while (v.norm() < 1e-12);
    return v / v.norm();
}

// Exact vMF sampling by the tangent-normal decomposition: the cosine w of
// the angle to mu comes from Wood's envelope-rejection scheme, the
// tangential part is uniform on the orthogonal subsphere.
inline Eigen::VectorXd sample_vmf(const Eigen::VectorXd& mu, double kappa, Rng& rng) {
    const Eigen::Index dim = mu.size();
    if (dim < 2 || std::abs(mu.norm() - 1.0) > 1e-6)
        throw std::invalid_argument("sample_vmf: mu must be a unit vector, dim >= 2");
    if (!(kappa >= 0.0))
        throw std::invalid_argument("sample_vmf: kappa must be >= 0");
    if (kappa == 0.0)
        return sample_uniform_direction(dim, rng);

    const double dm1 = double(dim - 1);
    const double b = dm1 / (std::sqrt(4.0 * kappa * kappa + dm1 * dm1) + 2.0 * kappa);
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + dm1 * std::log(1.0 - x0 * x0);

    double w;
    for (;;) {
        const double g1 = rng.gamma(0.5 * dm1);
        const double g2 = rng.gamma(0.5 * dm1);
        const double z = g1 / (g1 + g2);  // Beta((D-1)/2, (D-1)/2)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        const double u = rng.uniform_pos();
        if (kappa * w + dm1 * std::log(1.0 - x0 * w) - c >= std::log(u))
            break;
    }

    Eigen::VectorXd tangent(dim);
    double tnorm;
    do {
        for (Eigen::Index r = 0; r < dim; ++r)
            tangent[r] = rng.normal();
        tangent -= tangent.dot(mu) * mu;
        tnorm = tangent.norm();
    } while (tnorm < 1e-12);
    tangent /= tnorm;

    Eigen::VectorXd x = w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * tangent;
    x.normalize();
    return x;
}

// Draw a whole corpus plus its latent assignments. Document i uses the
// substream split(i), so generation is reproducible and can be
// parallelized by document.
inline std::pair<Corpus, GroundTruth> sample_corpus(const GenSpec& spec) {
    spec.validate();
    const Rng master(spec.seed);

    GroundTruth truth;
    if (spec.true_params) {
        truth.params = *spec.true_params;
    } else {
        Rng prng = master.split(0x7fffffffULL);
        truth.params.alpha = spec.alpha;
        truth.params.mu.resize(spec.dim, spec.k);
        truth.params.kappa.setConstant(spec.k, spec.kappa);
        for (int c = 0; c < spec.k; ++c)
            truth.params.mu.col(c) = sample_uniform_direction(spec.dim, prng);
    }

    truth.theta.resize(spec.num_docs, spec.k);
    truth.z.resize(static_cast<std::size_t>(spec.num_docs));

    std::vector<Document> docs(static_cast<std::size_t>(spec.num_docs));
    int width = 1;
    for (int n = spec.num_docs - 1; n >= 10; n /= 10)
        ++width;
    for (int i = 0; i < spec.num_docs; ++i) {
        Rng rng = master.split(std::uint64_t(i));
        const int span = spec.tokens_max - spec.tokens_min + 1;
        const int n_tokens = spec.tokens_min + int(rng.uniform() * span) % span;

        const Eigen::VectorXd theta = sample_dirichlet(spec.alpha, spec.k, rng);
        truth.theta.row(i) = theta.transpose();

        auto& d = docs[static_cast<std::size_t>(i)];
        std::string num = std::to_string(i);
        d.id = spec.id_prefix + std::string(static_cast<std::size_t>(width) - num.size(), '0') +
               num;
        d.label = spec.label;
        d.tokens.resize(n_tokens, spec.dim);
        auto& z_i = truth.z[static_cast<std::size_t>(i)];
        z_i.resize(static_cast<std::size_t>(n_tokens));
        for (int j = 0; j < n_tokens; ++j) {
            const double u = rng.uniform();
            int pick = spec.k - 1;
            double cum = 0.0;
            for (int c = 0; c < spec.k; ++c) {
                cum += theta[c];
                if (u < cum) {
                    pick = c;
                    break;
                }
            }
            z_i[static_cast<std::size_t>(j)] = pick;
            d.tokens.row(j) =
                sample_vmf(truth.params.mu.col(pick), truth.params.kappa[pick], rng).transpose();
        }
    }
    return {Corpus(std::move(docs)), std::move(truth)};
}

}  // namespace vmfmix
