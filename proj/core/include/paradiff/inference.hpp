#pragma once

#include "paradiff/denoiser.hpp"
#include "paradiff/guidance.hpp"
#include "paradiff/paraphrase.hpp"

#include <functional>
#include <optional>

namespace paradiff {

struct TransferConfig {
    int steps = 200;  // T; must match the checkpoint
    ScheduleKind schedule = ScheduleKind::paraguide;
    double top_p = 0.8;
    GuidanceSpec guidance;
    std::uint64_t seed = 11;
    int max_retries = 1;
    RenoiseRule renoise = RenoiseRule::posterior_step;
    // Restrict the guidance model's view to positions up to the first </s>
    // of the previous step's sample.
    bool mask_after_eos = true;
    // Replace everything after the first </s> of each sample with pads
    // before renoising.
    bool truncate_after_eos = true;

    void validate() const;
};

Json to_json(const TransferConfig& c);
TransferConfig transfer_config_from_json(const Json& j, const std::string& context = "transfer");

// Nucleus sampling over one probability row.
int top_p_sample(const Vector& probs, double p, Rng& rng);

// Token sampler used at every reverse step; replaceable in tests.
using TokenSampler = std::function<int(const Vector& probs, double p, Rng& rng)>;

struct TransferHooks {
    TokenSampler sampler;           // default: top_p_sample
    long* passes = nullptr;         // incremented once per reverse-process run
};

// One source text and what it should be steered towards.
struct TransferRequest {
    TokenSequence source;
    int target_class = 0;                         // attribute mode
    std::vector<TokenSequence> target_exemplars;  // style mode
    std::vector<TokenSequence> source_exemplars;  // style-mode evaluation only
    std::string direction;                        // label for per-direction aggregates
    Json meta = Json::object();
};

struct TransferRecord {
    long item = 0;
    TokenSequence source;
    TokenSequence paraphrase;
    TokenSequence output;
    double lambda = 0.0;
    GuidanceMode mode = GuidanceMode::none;
    int retries = 0;
    std::uint64_t seed = 0;
    bool empty_output = false;  // retries exhausted
    std::string direction;
    GuidanceStats guidance;
};

Json to_json(const TransferRecord& r, const Vocabulary& vocab);
TransferRecord transfer_record_from_json(const Json& j, const Vocabulary& vocab);
void write_transfers(const std::filesystem::path& path, const std::vector<TransferRecord>& records,
                     const Vocabulary& vocab);
std::vector<TransferRecord> read_transfers(const std::filesystem::path& path, const Vocabulary& vocab);

// Zeroes every position after the first </s> or pad.
void canonicalize_sample(std::vector<int>& ids);

// Reverse process for an already paraphrased input. Attempt a draws from
// derive_seed(cfg.seed, item, a); an empty result triggers a fresh attempt
// until max_retries is spent.
TransferRecord transfer_paraphrase(const TokenSequence& source, const TokenSequence& paraphrase, long item,
                                   const TransferConfig& cfg, const DenoiserCheckpoint& checkpoint,
                                   const GuidanceObjective* objective, const TransferHooks& hooks = {});

// Paraphrase (stream derive_seed(paraphraser seed, item)) then transfer.
TransferRecord transfer(const TokenSequence& w, long item, const TransferConfig& cfg,
                        const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                        const GuidanceObjective* objective, const TransferHooks& hooks = {});

// Guidance models available to a batch; only the one the mode needs is used.
struct GuidanceModels {
    const AttributeModel* attribute = nullptr;
    const StyleModel* style = nullptr;
};

std::unique_ptr<GuidanceObjective> make_objective(const GuidanceSpec& spec, const GuidanceModels& models);

// Maps transfer over requests; item i uses index i for all of its streams.
// cfg.guidance supplies mode, lambda, k, tau and rule; the target comes from
// each request.
std::vector<TransferRecord> transfer_batch(const std::vector<TransferRequest>& requests, const TransferConfig& cfg,
                                           const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                                           const GuidanceModels& models, const TransferHooks& hooks = {});

}  // namespace paradiff
