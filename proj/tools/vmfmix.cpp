// Apache License, Version 2.0, refer to LICENSE.txt
//
// vmfmix command line: train | infer | generate | eval.
// Exit codes: 0 success, 1 parse/file/flag errors, 2 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <set>

#include "vmfmix/features.hpp"
#include "vmfmix/generate.hpp"
#include "vmfmix/hungarian.hpp"
#include "vmfmix/inference.hpp"
#include "vmfmix/io.hpp"

namespace {

using namespace vmfmix;

struct TrainArgs {
    std::string corpus_path;
    std::string out_path;
    std::string trace_path;
    std::string init = "seeded-tokens";
    int k = 1;
    double alpha = 1.0;
    int max_iters = 100;
    double rel_tol = 1e-5;
    std::uint64_t seed = 0;
    double kappa_init = 10.0;
    bool per_label = false;
    bool deterministic = false;

    FitConfig config() const {
        FitConfig c;
        c.k = k;
        c.alpha = alpha;
        c.max_iters = max_iters;
        c.rel_tol = rel_tol;
        c.seed = seed;
        c.init = init_scheme_from_string(init);
        c.kappa_init = kappa_init;
        c.deterministic = deterministic;
        return c;
    }
};

void train_one(const Corpus& corpus, const FitConfig& config, const std::string& model_path,
               const std::string& trace_path, const std::string& tag) {
    const FitResult result = fit(corpus, config);
    io::ModelMeta meta;
    meta.elbo_final = result.report.elbo_trace.back();
    meta.iterations = result.report.iterations;
    meta.converged = result.report.converged;
    meta.config = config;
    io::write_model_file(model_path, result.params, meta);
    if (!trace_path.empty())
        io::write_trace_file(trace_path, result.report);
    std::cout << tag << (result.report.converged ? "converged" : "stopped") << " after "
              << result.report.iterations << " iterations, elbo " << io::fmt(meta.elbo_final)
              << ", wrote " << model_path << "\n";
    if (result.report.kappa_clamps > 0)
        std::cout << tag << "warning: " << result.report.kappa_clamps
                  << " degenerate concentration update(s) clamped to " << io::fmt(kKappaMax)
                  << "\n";
    if (result.report.rescued_components > 0)
        std::cout << tag << "warning: " << result.report.rescued_components
                  << " empty component(s) reseeded\n";
    if (corpus.normalized_count() > 0)
        std::cout << tag << "note: " << corpus.normalized_count()
                  << " input vector(s) renormalized\n";
}

int run_train(const TrainArgs& args) {
    const Corpus corpus = io::read_corpus_file(args.corpus_path);
    const FitConfig config = args.config();

    if (!args.per_label) {
        train_one(corpus, config, args.out_path, args.trace_path, "");
        return 0;
    }

    // Group documents by label, in first-appearance order.
    std::vector<std::string> labels;
    std::map<std::string, std::vector<Document>> groups;
    for (const auto& d : corpus.docs()) {
        if (d.label.empty())
            throw io::parse_error("--per-label: document '" + d.id + "' has no label");
        if (groups.find(d.label) == groups.end())
            labels.push_back(d.label);
        groups[d.label].push_back(d);
    }
    std::vector<std::pair<std::string, std::string>> manifest;
    for (const auto& label : labels) {
        const Corpus sub(std::move(groups[label]));
        const std::string model_path = args.out_path + "." + label;
        const std::string trace_path =
            args.trace_path.empty() ? "" : args.trace_path + "." + label;
        train_one(sub, config, model_path, trace_path, "[" + label + "] ");
        manifest.emplace_back(label, model_path);
    }
    io::write_manifest_file(args.out_path, manifest);
    std::cout << "wrote manifest " << args.out_path << " (" << manifest.size() << " labels)\n";
    return 0;
}

int run_infer(const std::vector<std::string>& model_paths, const std::string& corpus_path,
              const std::string& out_path) {
    std::vector<ModelParams> models;
    for (const auto& path : model_paths) {
        if (io::is_manifest_file(path)) {
            for (const auto& [label, model_path] : io::read_manifest_file(path))
                models.push_back(io::read_model_file(model_path).first);
        } else {
            models.push_back(io::read_model_file(path).first);
        }
    }
    const Corpus corpus = io::read_corpus_file(corpus_path);
    const auto features = combine_and_infer(models, corpus);
    io::write_features_file(out_path, features);
    std::cout << "wrote " << features.size() << " feature rows ("
              << features.front().proportions.size() << " topics) to " << out_path << "\n";
    return 0;
}

struct GenerateArgs {
    int k = 1;
    int dim = 2;
    int docs = 1;
    int tokens_min = 1;
    int tokens_max = 1;
    double alpha = 1.0;
    double kappa = 50.0;
    std::uint64_t seed = 0;
    std::string label;
    std::string id_prefix = "d";
    std::string out_path;
    std::string truth_path;
};

int run_generate(const GenerateArgs& args) {
    GenSpec spec;
    spec.k = args.k;
    spec.dim = args.dim;
    spec.num_docs = args.docs;
    spec.tokens_min = args.tokens_min;
    spec.tokens_max = args.tokens_max;
    spec.alpha = args.alpha;
    spec.kappa = args.kappa;
    spec.seed = args.seed;
    spec.label = args.label;
    spec.id_prefix = args.id_prefix;

    const auto [corpus, truth] = sample_corpus(spec);
    io::write_corpus_file(args.out_path, corpus);
    if (!args.truth_path.empty())
        io::write_truth_file(args.truth_path, corpus, truth);
    std::cout << "wrote " << corpus.num_docs() << " documents, " << corpus.total_tokens()
              << " tokens to " << args.out_path << "\n";
    return 0;
}

int run_eval(const std::string& model_path, const std::string& truth_path,
             const std::string& corpus_path) {
    const auto [params, meta] = io::read_model_file(model_path);
    const auto truth = io::read_truth_file(truth_path);
    const Corpus corpus = io::read_corpus_file(corpus_path);

    if (params.dim() != corpus.dim() || truth.params.dim() != corpus.dim())
        throw io::parse_error("eval: embedding dimension mismatch across files");
    if (params.k() != truth.params.k())
        throw io::parse_error("eval: component count mismatch between model and truth");
    if (Eigen::Index(truth.doc_ids.size()) != corpus.num_docs())
        throw io::parse_error("eval: document count mismatch between truth and corpus");
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        const auto& id = corpus.doc(i).id;
        const auto it = truth.z.find(id);
        if (it == truth.z.end() || Eigen::Index(it->second.size()) != corpus.doc(i).size())
            throw io::parse_error("eval: truth does not cover document '" + id + "'");
    }

    const Eigen::Index k = params.k();
    Eigen::MatrixXd cost(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b)
            cost(a, b) = -params.mu.col(a).dot(truth.params.mu.col(b));
    const auto match = min_cost_assignment(cost);

    std::printf("fit  true  cosine        kappa_fit     kappa_true\n");
    double min_cos = 1.0;
    for (Eigen::Index a = 0; a < k; ++a) {
        const double cos = -cost(a, match[std::size_t(a)]);
        min_cos = std::min(min_cos, cos);
        std::printf("%-4ld %-5d %-13.10f %-13.6f %-13.6f\n", long(a + 1),
                    match[std::size_t(a)] + 1, cos, params.kappa[a],
                    truth.params.kappa[match[std::size_t(a)]]);
    }

    const VariationalState state = infer_frozen(corpus, params);
    long correct = 0, total = 0;
    for (Eigen::Index i = 0; i < corpus.num_docs(); ++i) {
        const auto& z_true = truth.z.at(corpus.doc(i).id);
        const auto& pi = state.pi[std::size_t(i)];
        for (Eigen::Index j = 0; j < pi.rows(); ++j) {
            Eigen::Index argmax = 0;  // ties break to the lowest index
            pi.row(j).maxCoeff(&argmax);
            correct += match[std::size_t(argmax)] == z_true[std::size_t(j)] ? 1 : 0;
            ++total;
        }
    }
    const double bound = elbo(corpus, params, state, accumulate_stats(corpus, state));

    std::printf("min_matched_cosine %.10f\n", min_cos);
    std::printf("soft_assignment_accuracy %.6f\n", double(correct) / double(total));
    std::printf("final_elbo %s\n", io::fmt(bound).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vMF mixture topic embeddings: train, infer, generate, eval"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "fit a model to a corpus");
    train->add_option("corpus", train_args.corpus_path, "corpus file (TSV)")->required();
    train->add_option("--k", train_args.k, "number of components")->required();
    train->add_option("--alpha", train_args.alpha, "Dirichlet hyperparameter");
    train->add_option("--max-iters", train_args.max_iters, "EM iteration cap");
    train->add_option("--rel-tol", train_args.rel_tol, "relative ELBO improvement threshold");
    train->add_option("--seed", train_args.seed, "RNG seed");
    train->add_option("--init", train_args.init,
                      "seeded-tokens | random-directions | perturbed-global-mean");
    train->add_option("--kappa-init", train_args.kappa_init, "initial concentration");
    train->add_flag("--per-label", train_args.per_label,
                    "train one model per document label, write a manifest");
    train->add_flag("--deterministic", train_args.deterministic,
                    "fixed reduction order (recorded in the model file)");
    train->add_option("--out", train_args.out_path, "model (or manifest) output path")
        ->required();
    train->add_option("--trace", train_args.trace_path, "ELBO trace CSV output path");

    std::vector<std::string> infer_models;
    std::string infer_corpus, infer_out;
    auto* infer = app.add_subcommand("infer", "emit topic-proportion features");
    infer->add_option("corpus", infer_corpus, "corpus file (TSV)")->required();
    infer->add_option("--model", infer_models, "model file or manifest (repeatable)")
        ->required();
    infer->add_option("--out", infer_out, "features TSV output path")->required();

    GenerateArgs gen_args;
    auto* gen = app.add_subcommand("generate", "sample a synthetic corpus");
    gen->add_option("--k", gen_args.k, "number of components")->required();
    gen->add_option("--d", gen_args.dim, "embedding dimension")->required();
    gen->add_option("--docs", gen_args.docs, "number of documents")->required();
    gen->add_option("--tokens-min", gen_args.tokens_min, "minimum tokens per document")
        ->required();
    gen->add_option("--tokens-max", gen_args.tokens_max, "maximum tokens per document")
        ->required();
    gen->add_option("--alpha", gen_args.alpha, "Dirichlet hyperparameter");
    gen->add_option("--kappa", gen_args.kappa, "true concentration of every component");
    gen->add_option("--seed", gen_args.seed, "RNG seed");
    gen->add_option("--label", gen_args.label, "label stamped on every document");
    gen->add_option("--id-prefix", gen_args.id_prefix, "document id prefix");
    gen->add_option("--out", gen_args.out_path, "corpus output path")->required();
    gen->add_option("--truth", gen_args.truth_path, "ground-truth output path");

    std::string eval_model, eval_truth, eval_corpus;
    auto* eval = app.add_subcommand("eval", "score a model against ground truth");
    eval->add_option("model", eval_model, "model file")->required();
    eval->add_option("truth", eval_truth, "truth file")->required();
    eval->add_option("corpus", eval_corpus, "corpus file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (train->parsed())
            return run_train(train_args);
        if (infer->parsed())
            return run_infer(infer_models, infer_corpus, infer_out);
        if (gen->parsed())
            return run_generate(gen_args);
        if (eval->parsed())
            return run_eval(eval_model, eval_truth, eval_corpus);
    } catch (const numeric_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const io::parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
