#pragma once

#include "paradiff/corpus.hpp"
#include "paradiff/guidance_models.hpp"
#include "paradiff/inference.hpp"
#include "paradiff/paraphrase.hpp"
#include "paradiff/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace paradiff {

struct EvalConfig {
    int items = 200;                           // requests per run (fewer if the split is smaller)
    std::vector<double> lambdas{0.0, 10.0, 1000.0};  // sweep
    int exemplars = 16;                        // style exemplars per author
    std::uint64_t seed = 5;

    void validate() const;
};

Json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const Json& j, const std::string& context = "eval");

// Every stage's settings in one document. Shape fields shared between stages
// (vocabulary size, max length, T, schedule) are derived from the corpus and
// the denoiser; setting them explicitly to a conflicting value is an error.
struct RunConfig {
    std::uint64_t seed = 1;
    CorpusSpec corpus;
    ParaphraserConfig paraphrase;
    TrainConfig train;
    ToyTrainConfig classifier;
    ToyTrainConfig embedder = [] {
        ToyTrainConfig c;
        c.steps = 1200;
        return c;
    }();
    ToyTrainConfig fluency;
    TransferConfig transfer;
    EvalConfig eval;

    void validate() const;
};

Json to_json(const RunConfig& c);
// Unknown keys anywhere raise ConfigError naming the dotted key.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies "a.b.c=value" to a JSON document. value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(Json& doc, const std::string& assignment);

}  // namespace paradiff
