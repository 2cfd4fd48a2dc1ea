// Apache License, Version 2.0, refer to LICENSE.txt
//
// Topic-proportion features. A document's feature vector is the posterior
// Dirichlet mean phi_i / phi_i0. For multi-category training, per-category
// component sets are concatenated into one model and held fixed while the
// variational state is re-inferred per document.

#pragma once

#include <string>
#include <vector>

#include "vmfmix/inference.hpp"

namespace vmfmix {

struct TopicFeatures {
    std::string doc_id;
    Eigen::VectorXd proportions;  // on the simplex over the combined topic set
};

inline Eigen::VectorXd doc_proportions(const VariationalState& state, Eigen::Index doc_index) {
    if (doc_index < 0 || doc_index >= state.phi.rows())
        throw std::out_of_range("doc_proportions: document index out of range");
    return state.phi.row(doc_index).transpose() / state.phi0[doc_index];
}

// Concatenate per-category component sets. All models must agree on the
// embedding dimension and on alpha.
inline ModelParams concat_models(const std::vector<ModelParams>& models) {
    if (models.empty())
        throw std::invalid_argument("concat_models: no models given");
    Eigen::Index k_total = 0;
    for (const auto& m : models) {
        m.validate();
        if (m.dim() != models[0].dim())
            throw std::invalid_argument("concat_models: dimension mismatch across models");
        if (std::abs(m.alpha - models[0].alpha) > 1e-12)
            throw std::invalid_argument("concat_models: alpha mismatch across models");
        k_total += m.k();
    }
    ModelParams out;
    out.alpha = models[0].alpha;
    out.mu.resize(models[0].dim(), k_total);
    out.kappa.resize(k_total);
    Eigen::Index at = 0;
    for (const auto& m : models) {
        out.mu.middleCols(at, m.k()) = m.mu;
        out.kappa.segment(at, m.k()) = m.kappa;
        at += m.k();
    }
    return out;
}

struct FrozenInferOptions {
    int max_sweeps = 50;
    double rel_tol = 1e-6;  // on the per-document bound
};

// E-step-only inference with the parameters held fixed: alternate the
// responsibility sweep and the phi refresh per document until the
// document's share of the bound stops improving.
inline VariationalState infer_frozen(const Corpus& corpus, const ModelParams& params,
                                     const FrozenInferOptions& opts = {}) {
    params.validate();
    if (params.dim() != corpus.dim())
        throw std::invalid_argument("infer_frozen: model/corpus dimension mismatch");

    FitConfig config;
    config.k = int(params.k());
    config.alpha = params.alpha;
    VariationalState state = init_state(corpus, config);

    Eigen::VectorXd log_norm(params.k());
    for (Eigen::Index c = 0; c < params.k(); ++c)
        log_norm[c] = specfun::log_vmf_normalizer(int(params.dim()), params.kappa[c]);

    detail::for_each_doc(corpus.num_docs(), [&](Eigen::Index i) {
        const auto& tokens = corpus.doc(i).tokens;
        const Eigen::MatrixXd dots = tokens * params.mu;  // n x K
        auto& pi = state.pi[static_cast<std::size_t>(i)];
        double prev = 0.0;
        for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            Eigen::VectorXd bias(params.k());
            for (Eigen::Index c = 0; c < params.k(); ++c)
                bias[c] = log_norm[c] + specfun::digamma(state.phi(i, c));
            Eigen::MatrixXd logp = dots;
            logp.array().rowwise() *= params.kappa.transpose().array();
            logp.array().rowwise() += bias.transpose().array();
            if (!logp.allFinite())
                throw numeric_error("infer_frozen: non-finite log density (doc '" +
                                    corpus.doc(i).id + "')");
            const Eigen::VectorXd rowmax = logp.rowwise().maxCoeff();
            pi = (logp.colwise() - rowmax).array().exp();
            const Eigen::VectorXd rowsum = pi.rowwise().sum();
            pi.array().colwise() /= rowsum.array();
            state.phi.row(i) = pi.colwise().sum().array() + params.alpha;
            state.phi0[i] = state.phi.row(i).sum();

            const double bound = doc_elbo(corpus, params, state, i);
            if (sweep > 0 && (bound - prev) / std::abs(prev) < opts.rel_tol)
                break;
            prev = bound;
        }
    });
    return state;
}

// Concatenate the per-category models, freeze them, infer per-document
// states, and emit the Dirichlet-mean proportions over the combined set.
inline std::vector<TopicFeatures> combine_and_infer(const std::vector<ModelParams>& models,
                                                    const Corpus& corpus,
                                                    const FrozenInferOptions& opts = {}) {
    const ModelParams combined = concat_models(models);
    const VariationalState state = infer_frozen(corpus, combined, opts);
    std::vector<TopicFeatures> out;
    out.reserve(static_cast<std::size_t>(corpus.num_docs()));
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i)
        out.push_back({corpus.doc(i).id, doc_proportions(state, i)});
    return out;
}

}  // namespace vmfmix
