#pragma once

#include "paradiff/evaluation.hpp"
#include "paradiff/run_config.hpp"

#include <filesystem>

namespace paradiff {

// On-disk layout of a run under one work directory. Every stage writes into
// its own subdirectory together with resolved_config.json and VERSION.
struct WorkLayout {
    std::filesystem::path root;

    std::filesystem::path corpus_dir() const { return root / "corpus"; }
    std::filesystem::path corpus() const { return corpus_dir() / "corpus.jsonl"; }
    std::filesystem::path pairs_dir() const { return root / "pairs"; }
    std::filesystem::path pairs() const { return pairs_dir() / "pairs.jsonl"; }
    std::filesystem::path denoiser_dir() const { return root / "denoiser"; }
    std::filesystem::path denoiser() const { return denoiser_dir() / "denoiser.pdck"; }
    std::filesystem::path loss_curve() const { return denoiser_dir() / "loss_curve.jsonl"; }
    std::filesystem::path classifiers_dir() const { return root / "classifiers"; }
    std::filesystem::path classifier(bool internal) const {
        return classifiers_dir() / (internal ? "internal.pdck" : "external.pdck");
    }
    std::filesystem::path fluency() const { return classifiers_dir() / "fluency.pdck"; }
    std::filesystem::path embedders_dir() const { return root / "embedders"; }
    std::filesystem::path embedder(bool internal) const {
        return embedders_dir() / (internal ? "internal.pdck" : "external.pdck");
    }
    std::filesystem::path transfer_dir() const { return root / "transfer"; }
    std::filesystem::path transfers() const { return transfer_dir() / "transfers.jsonl"; }
    std::filesystem::path eval_dir() const { return root / "eval"; }
    std::filesystem::path report() const { return eval_dir() / "report.json"; }
    // One sweep per guidance mode so both can live in the same work directory.
    std::filesystem::path sweep_dir(GuidanceMode mode) const { return root / "sweep" / std::string(to_string(mode)); }
};

struct StageOptions {
    bool force = false;
};

// Internal models train on fold 0 of the training split, external models on
// fold 1, each with its own seed stream.
Provenance model_provenance(const RunConfig& cfg, const std::string& kind, bool internal);
// Fold of a training text: its position within the author's training texts, mod 2.
std::vector<int> training_folds(const Corpus& corpus);

// Transfer requests for the configured mode. Attribute mode flips the
// marker-majority attribute of test-split texts; style mode sends held-out
// authors' test texts to another held-out author, with exemplars from
// their training split.
std::vector<TransferRequest> make_requests(const Corpus& corpus, const RunConfig& cfg);

Corpus run_gen_corpus(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
std::vector<PairExample> run_build_pairs(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
TrainResult run_train(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
Json run_train_classifier(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
Json run_train_embedder(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
std::vector<TransferRecord> run_transfer(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
EvalReport run_evaluate(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);
SweepResult run_sweep(const RunConfig& cfg, const WorkLayout& work, const StageOptions& opt);

}  // namespace paradiff
