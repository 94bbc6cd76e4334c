#pragma once

#include "paradiff/denoiser.hpp"
#include "paradiff/paraphrase.hpp"

#include <functional>
#include <optional>

namespace paradiff {

struct TrainConfig {
    DenoiserConfig model;
    ScheduleKind schedule = ScheduleKind::paraguide;
    int batch_size = 32;
    double learning_rate = 2e-3;
    double clip_norm = 1.0;
    int steps = 2000;
    int eval_every = 100;
    int validation_examples = 256;
    // Used only when pairs carry no split metadata.
    double validation_fraction = 0.1;
    int checkpoint_every = 0;  // 0: only the selected checkpoint is written
    std::uint64_t seed = 3;

    void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, const std::string& context = "train");

struct LossRecord {
    long step = 0;
    double train_loss = 0.0;
    std::optional<double> val_loss;
};

struct TrainResult {
    DenoiserCheckpoint best;  // lowest validation loss
    std::vector<LossRecord> curve;
};

// Masked cross-entropy: sum over rows with mask != 0 of -log softmax(logits)[target].
ad::Var masked_cross_entropy(ad::Var logits, std::span<const int> targets, std::span<const double> mask);

// Denoiser targets for one text: tokens + </s>, padded; mask 1 on non-pad.
struct DenoisingTarget {
    std::vector<int> ids;
    std::vector<double> mask;
};
DenoisingTarget make_target(const TokenSequence& original, int max_len);

// Mean over non-pad target positions of -log p(w | x_t, t, p), with x_t from
// forward_noise at t_draws[i] for batch[i]. Gradients (if given) receive the
// derivative of this mean.
double batch_loss(const Denoiser& model, const EmbeddingTable& embeddings, const NoiseSchedule& schedule,
                  std::span<const PairExample* const> batch, std::span<const int> t_draws, Rng& rng,
                  Gradients* grads = nullptr);

struct PairSplit {
    std::vector<PairExample> train;
    std::vector<PairExample> validation;
};
// Holdout-author pairs are dropped. Pairs with split metadata keep it;
// otherwise a seeded validation_fraction is carved out.
PairSplit split_pairs(const std::vector<PairExample>& pairs, double validation_fraction, std::uint64_t seed);

using CheckpointCallback = std::function<void(const DenoiserCheckpoint&)>;

TrainResult train(const TrainConfig& config, const std::vector<PairExample>& train_pairs,
                  const std::vector<PairExample>& validation_pairs, const CheckpointCallback& on_checkpoint = {});

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

}  // namespace paradiff
