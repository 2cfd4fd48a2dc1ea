// Apache License, Version 2.0, refer to LICENSE.txt
//
// Text file formats. One token per line for corpora; a self-describing
// key-value document for models; TSV for features; CSV for fit traces.
// Floats are written with 17 significant digits so that write -> read is
// exact, and repeated runs with identical inputs produce identical bytes.
//
// Component indices in model, truth, and manifest files are 1-based.

#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vmfmix/core.hpp"
#include "vmfmix/features.hpp"
#include "vmfmix/generate.hpp"
#include "vmfmix/inference.hpp"

namespace vmfmix {
namespace io {

struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::vector<double> parse_doubles(const std::string& text, const std::string& where) {
    std::vector<double> out;
    const char* p = text.c_str();
    char* end = nullptr;
    while (*p) {
        const double v = std::strtod(p, &end);
        if (end == p) {
            while (*p == ' ' || *p == '\t')
                ++p;
            if (*p)
                throw parse_error(where + ": malformed number near '" + std::string(p) + "'");
            break;
        }
        if (!std::isfinite(v))
            throw parse_error(where + ": non-finite value");
        out.push_back(v);
        p = end;
    }
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw parse_error("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw parse_error("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

// --- corpus: doc_id <TAB> [label <TAB>] D floats ---------------------------

inline Corpus read_corpus(std::istream& in, const std::string& name = "corpus") {
    struct Builder {
        std::string label;
        std::vector<std::vector<double>> rows;
    };
    std::vector<std::string> order;
    std::map<std::string, Builder> builders;
    Eigen::Index dim = -1;

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const std::string where = name + ":" + std::to_string(lineno);
        const auto fields = detail::split(line, '\t');
        if (fields.size() < 2 || fields.size() > 3)
            throw parse_error(where + ": expected 2 or 3 tab-separated fields, got " +
                              std::to_string(fields.size()));
        const std::string& id = fields[0];
        const std::string label = fields.size() == 3 ? fields[1] : "";
        auto values = detail::parse_doubles(fields.back(), where);
        if (values.empty())
            throw parse_error(where + ": no vector components");
        if (dim < 0)
            dim = Eigen::Index(values.size());
        if (Eigen::Index(values.size()) != dim)
            throw parse_error(where + ": expected " + std::to_string(dim) + " components, got " +
                              std::to_string(values.size()));
        auto it = builders.find(id);
        if (it == builders.end()) {
            order.push_back(id);
            it = builders.emplace(id, Builder{}).first;
        }
        if (!label.empty()) {
            if (!it->second.label.empty() && it->second.label != label)
                throw parse_error(where + ": conflicting labels for document '" + id + "'");
            it->second.label = label;
        }
        it->second.rows.push_back(std::move(values));
    }
    if (order.empty())
        throw parse_error(name + ": empty corpus");

    std::vector<Document> docs;
    docs.reserve(order.size());
    for (const auto& id : order) {
        auto& b = builders[id];
        Document d;
        d.id = id;
        d.label = b.label;
        d.tokens.resize(Eigen::Index(b.rows.size()), dim);
        for (std::size_t r = 0; r < b.rows.size(); ++r)
            for (Eigen::Index c = 0; c < dim; ++c)
                d.tokens(Eigen::Index(r), c) = b.rows[r][std::size_t(c)];
        docs.push_back(std::move(d));
    }
    try {
        return Corpus(std::move(docs));
    } catch (const std::invalid_argument& e) {
        throw parse_error(name + ": " + e.what());
    }
}

inline Corpus read_corpus_file(const std::string& path) {
    auto in = detail::open_in(path);
    return read_corpus(in, path);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& d : corpus.docs())
        for (Eigen::Index j = 0; j < d.size(); ++j) {
            out << d.id << '\t';
            if (!d.label.empty())
                out << d.label << '\t';
            for (Eigen::Index c = 0; c < corpus.dim(); ++c)
                out << (c ? " " : "") << fmt(d.tokens(j, c));
            out << '\n';
        }
}

inline void write_corpus_file(const std::string& path, const Corpus& corpus) {
    auto out = detail::open_out(path);
    write_corpus(out, corpus);
}

// --- model ------------------------------------------------------------------

struct ModelMeta {
    double elbo_final = 0.0;
    int iterations = 0;
    bool converged = false;
    FitConfig config;
};

inline void write_model(std::ostream& out, const ModelParams& params, const ModelMeta& meta) {
    out << "vmfmix-model 1\n";
    out << "dim " << params.dim() << '\n';
    out << "k " << params.k() << '\n';
    out << "alpha " << fmt(params.alpha) << '\n';
    out << "elbo " << fmt(meta.elbo_final) << '\n';
    out << "iterations " << meta.iterations << '\n';
    out << "converged " << (meta.converged ? 1 : 0) << '\n';
    out << "seed " << meta.config.seed << '\n';
    out << "init " << to_string(meta.config.init) << '\n';
    out << "kappa_init " << fmt(meta.config.kappa_init) << '\n';
    out << "max_iters " << meta.config.max_iters << '\n';
    out << "rel_tol " << fmt(meta.config.rel_tol) << '\n';
    out << "deterministic " << (meta.config.deterministic ? 1 : 0) << '\n';
    for (Eigen::Index c = 0; c < params.k(); ++c) {
        out << "component " << (c + 1) << '\n';
        out << "kappa " << fmt(params.kappa[c]) << '\n';
        out << "mu";
        for (Eigen::Index r = 0; r < params.dim(); ++r)
            out << ' ' << fmt(params.mu(r, c));
        out << '\n';
    }
    out << "end\n";
}

inline void write_model_file(const std::string& path, const ModelParams& params,
                             const ModelMeta& meta) {
    auto out = detail::open_out(path);
    write_model(out, params, meta);
}

inline std::pair<ModelParams, ModelMeta> read_model(std::istream& in,
                                                    const std::string& name = "model") {
    std::string line;
    if (!std::getline(in, line) || line != "vmfmix-model 1")
        throw parse_error(name + ": not a vmfmix model file");

    ModelParams params;
    ModelMeta meta;
    Eigen::Index dim = -1, k = -1, at = -1;

    auto need = [&](bool ok, const std::string& what) {
        if (!ok)
            throw parse_error(name + ": " + what);
    };

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line == "end")
            break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest.front() == ' ')
            rest.erase(0, 1);
        if (key == "dim") {
            dim = std::stol(rest);
        } else if (key == "k") {
            k = std::stol(rest);
            need(dim > 0 && k > 0, "dim and k must be positive");
            params.mu.setZero(dim, k);
            params.kappa.setZero(k);
        } else if (key == "alpha") {
            params.alpha = std::stod(rest);
        } else if (key == "elbo") {
            meta.elbo_final = std::stod(rest);
        } else if (key == "iterations") {
            meta.iterations = std::stoi(rest);
        } else if (key == "converged") {
            meta.converged = rest == "1";
        } else if (key == "seed") {
            meta.config.seed = std::stoull(rest);
        } else if (key == "init") {
            meta.config.init = init_scheme_from_string(rest);
        } else if (key == "kappa_init") {
            meta.config.kappa_init = std::stod(rest);
        } else if (key == "max_iters") {
            meta.config.max_iters = std::stoi(rest);
        } else if (key == "rel_tol") {
            meta.config.rel_tol = std::stod(rest);
        } else if (key == "deterministic") {
            meta.config.deterministic = rest == "1";
        } else if (key == "component") {
            need(k > 0, "component before k");
            at = std::stol(rest) - 1;
            need(at >= 0 && at < k, "component index out of range");
        } else if (key == "kappa") {
            need(at >= 0, "kappa outside component block");
            params.kappa[at] = std::stod(rest);
        } else if (key == "mu") {
            need(at >= 0, "mu outside component block");
            const auto values = detail::parse_doubles(rest, name);
            need(Eigen::Index(values.size()) == dim, "mu has wrong dimension");
            for (Eigen::Index r = 0; r < dim; ++r)
                params.mu(r, at) = values[std::size_t(r)];
        } else {
            throw parse_error(name + ": unknown key '" + key + "'");
        }
    }
    need(dim > 0 && k > 0, "missing dim/k");
    meta.config.k = int(k);
    meta.config.alpha = params.alpha;
    try {
        params.validate();
    } catch (const std::invalid_argument& e) {
        throw parse_error(name + ": " + e.what());
    }
    return {std::move(params), std::move(meta)};
}

inline std::pair<ModelParams, ModelMeta> read_model_file(const std::string& path) {
    auto in = detail::open_in(path);
    return read_model(in, path);
}

// --- per-label manifest -----------------------------------------------------

inline void write_manifest_file(const std::string& path,
                                const std::vector<std::pair<std::string, std::string>>& entries) {
    auto out = detail::open_out(path);
    out << "vmfmix-manifest 1\n";
    for (const auto& [label, model_path] : entries)
        out << label << '\t' << model_path << '\n';
}

inline bool is_manifest_file(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    return in && std::getline(in, line) && line.rfind("vmfmix-manifest", 0) == 0;
}

inline std::vector<std::pair<std::string, std::string>> read_manifest_file(
    const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "vmfmix-manifest 1")
        throw parse_error(path + ": not a vmfmix manifest");
    std::vector<std::pair<std::string, std::string>> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto fields = detail::split(line, '\t');
        if (fields.size() != 2)
            throw parse_error(path + ":" + std::to_string(lineno) + ": expected label<TAB>path");
        out.emplace_back(fields[0], fields[1]);
    }
    if (out.empty())
        throw parse_error(path + ": empty manifest");
    return out;
}

// --- features TSV -----------------------------------------------------------

inline void write_features(std::ostream& out, const std::vector<TopicFeatures>& features) {
    if (features.empty())
        return;
    out << "doc_id";
    for (Eigen::Index c = 0; c < features[0].proportions.size(); ++c)
        out << "\tp" << (c + 1);
    out << '\n';
    for (const auto& f : features) {
        out << f.doc_id;
        for (Eigen::Index c = 0; c < f.proportions.size(); ++c)
            out << '\t' << fmt(f.proportions[c]);
        out << '\n';
    }
}

inline void write_features_file(const std::string& path,
                                const std::vector<TopicFeatures>& features) {
    auto out = detail::open_out(path);
    write_features(out, features);
}

// --- ELBO trace CSV ----------------------------------------------------------

inline void write_trace_file(const std::string& path, const FitReport& report) {
    auto out = detail::open_out(path);
    out << "iter,elbo,wall_ms\n";
    for (std::size_t i = 0; i < report.elbo_trace.size(); ++i) {
        char ms[32];
        std::snprintf(ms, sizeof(ms), "%.3f", report.iter_wall_ms[i]);
        out << (i + 1) << ',' << fmt(report.elbo_trace[i]) << ',' << ms << '\n';
    }
}

// --- ground truth ------------------------------------------------------------

inline void write_truth_file(const std::string& path, const Corpus& corpus,
                             const GroundTruth& truth) {
    auto out = detail::open_out(path);
    out << "vmfmix-truth 1\n";
    out << "dim " << truth.params.dim() << '\n';
    out << "k " << truth.params.k() << '\n';
    out << "alpha " << fmt(truth.params.alpha) << '\n';
    for (Eigen::Index c = 0; c < truth.params.k(); ++c) {
        out << "component " << (c + 1) << '\n';
        out << "kappa " << fmt(truth.params.kappa[c]) << '\n';
        out << "mu";
        for (Eigen::Index r = 0; r < truth.params.dim(); ++r)
            out << ' ' << fmt(truth.params.mu(r, c));
        out << '\n';
    }
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        out << "theta " << corpus.doc(i).id;
        for (Eigen::Index c = 0; c < truth.params.k(); ++c)
            out << ' ' << fmt(truth.theta(i, c));
        out << '\n';
    }
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        const auto& z_i = truth.z[std::size_t(i)];
        for (std::size_t j = 0; j < z_i.size(); ++j)
            out << "z " << corpus.doc(i).id << ' ' << (j + 1) << ' ' << (z_i[j] + 1) << '\n';
    }
}

struct TruthData {
    ModelParams params;
    std::vector<std::string> doc_ids;
    std::vector<Eigen::VectorXd> theta;
    std::map<std::string, std::vector<int>> z;  // 0-based components
};

inline TruthData read_truth_file(const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || line != "vmfmix-truth 1")
        throw parse_error(path + ": not a vmfmix truth file");

    TruthData t;
    Eigen::Index dim = -1, k = -1, at = -1;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dim") {
            ls >> dim;
        } else if (key == "k") {
            ls >> k;
            if (dim < 2 || k < 1)
                throw parse_error(path + ": bad dim/k");
            t.params.mu.setZero(dim, k);
            t.params.kappa.setZero(k);
        } else if (key == "alpha") {
            ls >> t.params.alpha;
        } else if (key == "component") {
            long idx;
            ls >> idx;
            at = idx - 1;
            if (at < 0 || at >= k)
                throw parse_error(path + ": component index out of range");
        } else if (key == "kappa") {
            ls >> t.params.kappa[at];
        } else if (key == "mu") {
            for (Eigen::Index r = 0; r < dim; ++r)
                ls >> t.params.mu(r, at);
        } else if (key == "theta") {
            std::string id;
            ls >> id;
            t.doc_ids.push_back(id);
            Eigen::VectorXd v(k);
            for (Eigen::Index c = 0; c < k; ++c)
                ls >> v[c];
            t.theta.push_back(v);
        } else if (key == "z") {
            std::string id;
            long token_idx, comp;
            ls >> id >> token_idx >> comp;
            if (comp < 1 || comp > k)
                throw parse_error(path + ": z component out of range");
            auto& zs = t.z[id];
            if (long(zs.size()) + 1 != token_idx)
                throw parse_error(path + ": z rows out of order for document '" + id + "'");
            zs.push_back(int(comp - 1));
        } else {
            throw parse_error(path + ": unknown key '" + key + "'");
        }
        if (ls.fail())
            throw parse_error(path + ": malformed '" + key + "' line");
    }
    if (dim < 2 || k < 1 || t.doc_ids.empty())
        throw parse_error(path + ": incomplete truth file");
    return t;
}

}  // namespace io
}  // namespace vmfmix
