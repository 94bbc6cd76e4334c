#pragma once

#include "paradiff/autodiff.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/schedules.hpp"

#include <span>

namespace paradiff {

using ad::Matrix;

// Frozen word-embedding lookup E shared by the forward process, renoising and
// the denoiser's paraphrase input.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(Matrix table, bool frozen = true);

    // Rows drawn from N(0, I) and rescaled to unit L2 norm.
    static EmbeddingTable unit_rows(int vocab_size, int dim, Rng& rng);

    const Matrix& matrix() const { return table_; }
    int vocab_size() const { return static_cast<int>(table_.rows()); }
    int dim() const { return static_cast<int>(table_.cols()); }
    bool frozen() const { return frozen_; }

    Matrix lookup(std::span<const int> ids) const;

private:
    Matrix table_;
    bool frozen_ = true;
};

// x_t for one padded sequence (L_max x D) at timestep t.
struct NoisedLatent {
    Matrix x;
    int t = 0;
};

// Which alpha_bar index renoising uses after sampling at step t:
// posterior_step uses alpha_bar(t-1) (the latent fed to step t-1);
// literal_loop reuses alpha_bar(t).
enum class RenoiseRule { posterior_step, literal_loop };

// sqrt(alpha_bar_t) E(w) + sqrt(1 - alpha_bar_t) eps, eps ~ N(0, I); 1 <= t <= T.
NoisedLatent forward_noise(std::span<const int> padded_ids, int t, const NoiseSchedule& schedule,
                           const EmbeddingTable& embeddings, Rng& rng);

// Re-embeds sampled tokens and noises them to level t_next (0 <= t_next < T).
NoisedLatent renoise(std::span<const int> sampled_ids, int t_next, const NoiseSchedule& schedule,
                     const EmbeddingTable& embeddings, Rng& rng,
                     RenoiseRule rule = RenoiseRule::posterior_step);

// Pure N(0, I) latent used to start the reverse process at t = T.
NoisedLatent initial_latent(int length, int dim, int T, Rng& rng);

}  // namespace paradiff
