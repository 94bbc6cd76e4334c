#include "paradiff/diffusion.hpp"

#include "paradiff/errors.hpp"

namespace paradiff {

EmbeddingTable::EmbeddingTable(Matrix table, bool frozen) : table_(std::move(table)), frozen_(frozen) {
    if (table_.rows() < 1 || table_.cols() < 1) throw ContractError("embedding table must be non-empty");
    if (!table_.allFinite()) throw ContractError("embedding table has non-finite entries");
    for (Eigen::Index r = 0; r < table_.rows(); ++r) {
        if (table_.row(r).norm() == 0.0) throw ContractError("embedding table has a zero row");
    }
}

EmbeddingTable EmbeddingTable::unit_rows(int vocab_size, int dim, Rng& rng) {
    Matrix m(vocab_size, dim);
    for (int r = 0; r < vocab_size; ++r) {
        for (int c = 0; c < dim; ++c) m(r, c) = rng.normal();
        m.row(r).normalize();
    }
    return EmbeddingTable(std::move(m), true);
}

Matrix EmbeddingTable::lookup(std::span<const int> ids) const {
    Matrix out(static_cast<Eigen::Index>(ids.size()), table_.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table_.rows()) {
            throw ContractError("token id " + std::to_string(ids[i]) + " outside vocabulary");
        }
        out.row(static_cast<Eigen::Index>(i)) = table_.row(ids[i]);
    }
    return out;
}

namespace {

// Shared arithmetic for forward noising and renoising.
Matrix noise_embeddings(std::span<const int> ids, int level, const NoiseSchedule& schedule,
                        const EmbeddingTable& embeddings, Rng& rng) {
    const double signal = schedule.signal_scale(level);
    const double noise = schedule.noise_scale(level);
    Matrix x = embeddings.lookup(ids) * signal;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) += noise * rng.normal();
    }
    return x;
}

}  // namespace

NoisedLatent forward_noise(std::span<const int> padded_ids, int t, const NoiseSchedule& schedule,
                           const EmbeddingTable& embeddings, Rng& rng) {
    if (t < 1 || t > schedule.steps()) {
        throw DomainError("forward_noise: t=" + std::to_string(t) + " outside [1, " +
                          std::to_string(schedule.steps()) + "]");
    }
    return {noise_embeddings(padded_ids, t, schedule, embeddings, rng), t};
}

NoisedLatent renoise(std::span<const int> sampled_ids, int t_next, const NoiseSchedule& schedule,
                     const EmbeddingTable& embeddings, Rng& rng, RenoiseRule rule) {
    if (t_next < 0 || t_next > schedule.steps() - 1) {
        throw DomainError("renoise: t_next=" + std::to_string(t_next) + " outside [0, " +
                          std::to_string(schedule.steps() - 1) + "]");
    }
    const int level = rule == RenoiseRule::posterior_step ? t_next : t_next + 1;
    return {noise_embeddings(sampled_ids, level, schedule, embeddings, rng), t_next};
}

NoisedLatent initial_latent(int length, int dim, int T, Rng& rng) {
    Matrix x(length, dim);
    for (int r = 0; r < length; ++r) {
        for (int c = 0; c < dim; ++c) x(r, c) = rng.normal();
    }
    return {std::move(x), T};
}

}  // namespace paradiff
