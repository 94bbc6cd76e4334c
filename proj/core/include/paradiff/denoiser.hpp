#pragma once

#include "paradiff/checkpoint.hpp"
#include "paradiff/diffusion.hpp"
#include "paradiff/encoder.hpp"
#include "paradiff/vocab.hpp"

#include "paradiff/json_io.hpp"

#include <span>

namespace paradiff {

struct DenoiserConfig {
    int vocab_size = 64;
    int dim = 32;
    int max_len = 16;
    int layers = 2;
    int heads = 4;
    int hidden = 64;
    int steps = 200;  // T
    // Disabling positions isolates the positional machinery in tests.
    bool positional = true;

    void validate() const;
    EncoderConfig encoder() const { return {dim, heads, hidden, layers}; }
    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);

// Paraphrase-conditioned denoiser. The input sequence is
//   [E(p) + pos[0..L) + seg[0]] ++ [x_t + pos[L..2L) + seg[1] + time[t]]
// run through a bidirectional encoder; the latent half is projected to
// vocabulary logits. Paraphrase pads are masked as attention keys.
class Denoiser {
public:
    Denoiser(const DenoiserConfig& config, Rng& init_rng);

    const DenoiserConfig& config() const { return config_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    void zero_output_head();

    // L x V logits on a caller-owned tape (for training and gradient checks).
    // paraphrase_ids is padded to max_len; paraphrase_valid marks positions
    // that may be attended.
    ad::Var forward(ParamBinding& binding, const Matrix& latent, int t, std::span<const int> paraphrase_ids,
                    std::span<const char> paraphrase_valid, const EmbeddingTable& embeddings) const;

    // No-grad forward pass. The paraphrase is unpadded; pads are added here.
    Matrix predict_logits(const NoisedLatent& latent, const TokenSequence& paraphrase,
                          const EmbeddingTable& embeddings) const;

    // As above, with an explicit padded paraphrase and validity mask.
    Matrix predict_logits(const NoisedLatent& latent, std::span<const int> paraphrase_ids,
                          std::span<const char> paraphrase_valid, const EmbeddingTable& embeddings) const;

private:
    DenoiserConfig config_;
    ParamSet params_;
    EncoderLayout encoder_;
    std::size_t time_embedding_ = 0, position_embedding_ = 0, segment_embedding_ = 0;
    std::size_t head_weight_ = 0, head_bias_ = 0;
};

std::vector<char> valid_mask(std::span<const int> padded_ids);

// Everything needed to run the reverse process: model, frozen E, schedule.
struct DenoiserCheckpoint {
    Denoiser model;
    EmbeddingTable embeddings;
    ScheduleKind schedule = ScheduleKind::paraguide;
    long step = 0;
    double validation_loss = 0.0;
    Json extra = Json::object();

    NoiseSchedule noise_schedule() const { return NoiseSchedule(schedule, model.config().steps); }
};

void save_denoiser_checkpoint(const std::filesystem::path& path, const DenoiserCheckpoint& ckpt);
DenoiserCheckpoint load_denoiser_checkpoint(const std::filesystem::path& path);

}  // namespace paradiff
