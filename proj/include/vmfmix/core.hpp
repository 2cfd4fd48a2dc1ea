// Apache License, Version 2.0, refer to LICENSE.txt
//
// Domain types for corpora of unit vectors, mixture parameters, the
// mean-field variational state, and sufficient statistics, plus the
// accumulation step that turns responsibilities into statistics.

#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vmfmix {

// Concentrations diverge as the mean resultant length approaches 1; clamp
// here and flag the component as degenerate.
inline constexpr double kKappaMax = 1e5;

// Components whose soft count falls below this are treated as empty and
// reseeded by the fit loop.
inline constexpr double kEmptyComponentCount = 1e-8;

// Raised when a computation produces a non-finite value from valid inputs.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Document {
    std::string id;
    std::string label;        // empty means unlabeled
    Eigen::MatrixXd tokens;   // one unit vector per row, n_i x D

    Eigen::Index size() const { return tokens.rows(); }
};

// A corpus fixes the embedding dimension and guarantees unit-norm tokens.
// Ingestion normalizes every row; rows that needed correction beyond 1e-6
// are counted, exact zero rows are rejected.
class Corpus {
  public:
    explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
        if (docs_.empty())
            throw std::invalid_argument("Corpus: at least one document required");
        dim_ = docs_[0].tokens.cols();
        if (dim_ < 2)
            throw std::invalid_argument("Corpus: embedding dimension must be >= 2");
        for (auto& d : docs_) {
            if (d.tokens.rows() < 1)
                throw std::invalid_argument("Corpus: document '" + d.id + "' has no vectors");
            if (d.tokens.cols() != dim_)
                throw std::invalid_argument("Corpus: dimension mismatch in document '" + d.id +
                                            "'");
            for (Eigen::Index j = 0; j < d.tokens.rows(); ++j) {
                const double norm = d.tokens.row(j).norm();
                if (!(norm >= 1e-12) || !std::isfinite(norm))
                    throw std::invalid_argument("Corpus: zero or non-finite vector in document '" +
                                                d.id + "'");
                if (std::abs(norm - 1.0) > 1e-6)
                    ++normalized_;
                // skip rows already unit to rounding; ingestion stays idempotent
                if (std::abs(norm - 1.0) > 1e-12)
                    d.tokens.row(j) /= norm;
            }
            total_tokens_ += d.tokens.rows();
        }
    }

    Eigen::Index dim() const { return dim_; }
    Eigen::Index num_docs() const { return static_cast<Eigen::Index>(docs_.size()); }
    Eigen::Index total_tokens() const { return total_tokens_; }
    const Document& doc(Eigen::Index i) const { return docs_[static_cast<std::size_t>(i)]; }
    const std::vector<Document>& docs() const { return docs_; }

    // Rows whose norm was off by more than the ingestion tolerance.
    int normalized_count() const { return normalized_; }

  private:
    std::vector<Document> docs_;
    Eigen::Index dim_ = 0;
    Eigen::Index total_tokens_ = 0;
    int normalized_ = 0;
};

// Mixture parameters: K unit mean directions (columns of mu) with their
// concentrations, plus the symmetric Dirichlet hyperparameter alpha.
struct ModelParams {
    double alpha = 1.0;
    Eigen::MatrixXd mu;      // D x K, unit columns
    Eigen::VectorXd kappa;   // K, in [0, kKappaMax]

    Eigen::Index dim() const { return mu.rows(); }
    Eigen::Index k() const { return mu.cols(); }

    void validate() const {
        if (k() < 1 || kappa.size() != k())
            throw std::invalid_argument("ModelParams: inconsistent component count");
        if (!(alpha > 0.0))
            throw std::invalid_argument("ModelParams: alpha must be > 0");
        for (Eigen::Index c = 0; c < k(); ++c) {
            if (std::abs(mu.col(c).norm() - 1.0) > 1e-9)
                throw std::invalid_argument("ModelParams: mean direction not unit norm");
            if (!(kappa[c] >= 0.0) || kappa[c] > kKappaMax)
                throw std::invalid_argument("ModelParams: kappa out of range");
        }
    }
};

// Mean-field state: per-token responsibility rows (each on the K-simplex)
// and per-document Dirichlet parameters with their totals.
struct VariationalState {
    std::vector<Eigen::MatrixXd> pi;  // per document, n_i x K
    Eigen::MatrixXd phi;              // num_docs x K, entries > 0
    Eigen::VectorXd phi0;             // row sums of phi

    Eigen::Index k() const { return phi.cols(); }

    void validate(const Corpus& corpus) const {
        if (static_cast<Eigen::Index>(pi.size()) != corpus.num_docs() ||
            phi.rows() != corpus.num_docs() || phi0.size() != corpus.num_docs())
            throw std::invalid_argument("VariationalState: document count mismatch");
        for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
            const auto& p = pi[static_cast<std::size_t>(i)];
            if (p.rows() != corpus.doc(i).size() || p.cols() != k())
                throw std::invalid_argument("VariationalState: responsibility shape mismatch");
            if ((p.array() < 0.0).any())
                throw std::invalid_argument("VariationalState: negative responsibility");
            if (((p.rowwise().sum().array() - 1.0).abs() > 1e-10).any())
                throw std::invalid_argument("VariationalState: responsibility row not normalized");
            if (!(phi.row(i).minCoeff() > 0.0))
                throw std::invalid_argument("VariationalState: phi must be positive");
            if (std::abs(phi.row(i).sum() - phi0[i]) > 1e-10)
                throw std::invalid_argument("VariationalState: phi0 out of sync");
        }
    }
};

// Soft counts and resultants of the responsibilities.
struct SufficientStats {
    Eigen::MatrixXd n_ik;   // num_docs x K, n_ik = sum_j pi_ijk
    Eigen::VectorXd n_k;    // K, column sums of n_ik
    Eigen::MatrixXd r;      // D x K, r_k = sum_ij pi_ijk x_ij
};

// Accumulate statistics document by document in index order; the fixed
// reduction order makes the result reproducible bit for bit.
inline SufficientStats accumulate_stats(const Corpus& corpus, const VariationalState& state) {
    const Eigen::Index n_docs = corpus.num_docs();
    const Eigen::Index k = state.k();
    if (static_cast<Eigen::Index>(state.pi.size()) != n_docs)
        throw std::invalid_argument("accumulate_stats: state does not match corpus");
    SufficientStats stats;
    stats.n_ik.setZero(n_docs, k);
    stats.n_k.setZero(k);
    stats.r.setZero(corpus.dim(), k);
    for (Eigen::Index i = 0; i < n_docs; ++i) {
        const auto& p = state.pi[static_cast<std::size_t>(i)];
        if (p.rows() != corpus.doc(i).size() || p.cols() != k)
            throw std::invalid_argument("accumulate_stats: responsibility shape mismatch");
        stats.n_ik.row(i) = p.colwise().sum();
        stats.r.noalias() += corpus.doc(i).tokens.transpose() * p;
    }
    for (Eigen::Index i = 0; i < n_docs; ++i)
        stats.n_k += stats.n_ik.row(i).transpose();
    return stats;
}

// Fit trace and outcome diagnostics.
struct FitReport {
    std::vector<double> elbo_trace;
    std::vector<double> iter_wall_ms;
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0.0;
    int rescued_components = 0;
    int kappa_clamps = 0;
};

}  // namespace vmfmix
