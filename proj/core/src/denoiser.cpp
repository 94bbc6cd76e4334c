#include "paradiff/denoiser.hpp"

#include "paradiff/errors.hpp"

#include <cmath>

namespace paradiff {

namespace {
constexpr double kMaskedKey = -1e9;
}

void DenoiserConfig::validate() const {
    if (vocab_size < 1 || dim < 1 || max_len < 1 || layers < 1 || heads < 1 || hidden < 1 || steps < 1) {
        throw ContractError("denoiser config: all sizes must be positive");
    }
    if (dim % heads != 0) throw ContractError("denoiser config: dim must be divisible by heads");
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size}, {"dim", c.dim},       {"max_len", c.max_len},
                       {"layers", c.layers},         {"heads", c.heads},   {"hidden", c.hidden},
                       {"steps", c.steps},           {"positional", c.positional}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("dim").get_to(c.dim);
    j.at("max_len").get_to(c.max_len);
    j.at("layers").get_to(c.layers);
    j.at("heads").get_to(c.heads);
    j.at("hidden").get_to(c.hidden);
    j.at("steps").get_to(c.steps);
    j.at("positional").get_to(c.positional);
}

std::vector<char> valid_mask(std::span<const int> padded_ids) {
    std::vector<char> out(padded_ids.size());
    for (std::size_t i = 0; i < padded_ids.size(); ++i) out[i] = padded_ids[i] != kPadId ? 1 : 0;
    return out;
}

Denoiser::Denoiser(const DenoiserConfig& config, Rng& init_rng) : config_(config) {
    config_.validate();
    const int d = config_.dim;
    time_embedding_ = params_.add("time_embedding", random_normal(config_.steps + 1, d, 0.1, init_rng));
    position_embedding_ = params_.add("position_embedding", random_normal(2 * config_.max_len, d, 0.1, init_rng));
    segment_embedding_ = params_.add("segment_embedding", random_normal(2, d, 0.1, init_rng));
    encoder_ = add_encoder_params(params_, "encoder", config_.encoder(), init_rng);
    head_weight_ = params_.add("head.weight", random_normal(d, config_.vocab_size, 1.0 / std::sqrt(d), init_rng));
    head_bias_ = params_.add("head.bias", Matrix::Zero(1, config_.vocab_size));
}

void Denoiser::zero_output_head() {
    params_.at(head_weight_).setZero();
    params_.at(head_bias_).setZero();
}

ad::Var Denoiser::forward(ParamBinding& p, const Matrix& latent, int t, std::span<const int> paraphrase_ids,
                          std::span<const char> paraphrase_valid, const EmbeddingTable& embeddings) const {
    const int L = config_.max_len;
    if (latent.rows() != L || latent.cols() != config_.dim) {
        throw ContractError("denoiser: latent must be " + std::to_string(L) + " x " + std::to_string(config_.dim));
    }
    if (static_cast<int>(paraphrase_ids.size()) != L || paraphrase_valid.size() != paraphrase_ids.size()) {
        throw ContractError("denoiser: paraphrase must be padded to " + std::to_string(L));
    }
    if (embeddings.dim() != config_.dim || embeddings.vocab_size() != config_.vocab_size) {
        throw ContractError("denoiser: embedding table shape does not match config");
    }
    if (t < 1 || t > config_.steps) throw DomainError("denoiser: t outside [1, T]");

    ad::Tape& tape = p.tape();
    ad::Var para = tape.constant(embeddings.lookup(paraphrase_ids));
    ad::Var lat = tape.constant(latent);
    const int seg0 = 0, seg1 = 1;
    para = ad::add_row(para, ad::gather_rows(p[segment_embedding_], std::span<const int>(&seg0, 1)));
    lat = ad::add_row(lat, ad::gather_rows(p[segment_embedding_], std::span<const int>(&seg1, 1)));
    lat = ad::add_row(lat, ad::gather_rows(p[time_embedding_], std::span<const int>(&t, 1)));
    if (config_.positional) {
        para = para + ad::slice_rows(p[position_embedding_], 0, L);
        lat = lat + ad::slice_rows(p[position_embedding_], L, L);
    }
    const ad::Var x = ad::concat_rows(para, lat);

    Matrix bias = Matrix::Zero(1, 2 * L);
    for (int i = 0; i < L; ++i) {
        if (!paraphrase_valid[static_cast<std::size_t>(i)]) bias(0, i) = kMaskedKey;
    }
    const ad::Var h = encode(p, encoder_, config_.encoder(), x, tape.constant(std::move(bias)));
    const ad::Var out = ad::slice_rows(h, L, L);
    return ad::add_row(ad::matmul(out, p[head_weight_]), p[head_bias_]);
}

Matrix Denoiser::predict_logits(const NoisedLatent& latent, const TokenSequence& paraphrase,
                                const EmbeddingTable& embeddings) const {
    const auto ids = to_model_input(paraphrase, config_.max_len, false);
    const auto valid = valid_mask(ids);
    return predict_logits(latent, ids, valid, embeddings);
}

Matrix Denoiser::predict_logits(const NoisedLatent& latent, std::span<const int> paraphrase_ids,
                                std::span<const char> paraphrase_valid, const EmbeddingTable& embeddings) const {
    ad::Tape tape;
    ParamBinding binding(tape, params_);
    return forward(binding, latent.x, latent.t, paraphrase_ids, paraphrase_valid, embeddings).value();
}


void save_denoiser_checkpoint(const std::filesystem::path& path, const DenoiserCheckpoint& ckpt) {
    Archive a;
    a.meta = Json{{"kind", "denoiser"},
                  {"config", ckpt.model.config()},
                  {"schedule", {{"kind", std::string(to_string(ckpt.schedule))}, {"T", ckpt.model.config().steps}}},
                  {"step", ckpt.step},
                  {"validation_loss", std::isfinite(ckpt.validation_loss) ? Json(ckpt.validation_loss) : Json(nullptr)},
                  {"extra", ckpt.extra}};
    a.tensors.emplace_back("embedding_table", ckpt.embeddings.matrix());
    store_params(a, ckpt.model.params(), "model.");
    write_archive(path, a);
}

DenoiserCheckpoint load_denoiser_checkpoint(const std::filesystem::path& path) {
    const Archive a = read_archive(path);
    if (a.meta.value("kind", "") != "denoiser") throw ContractError("not a denoiser checkpoint: " + path.string());
    const auto config = a.meta.at("config").get<DenoiserConfig>();
    Rng unused(0);
    DenoiserCheckpoint ckpt{Denoiser(config, unused), EmbeddingTable(a.tensor("embedding_table"), true),
                            parse_schedule_kind(a.meta.at("schedule").at("kind").get<std::string>()),
                            a.meta.at("step").get<long>(),
                            a.meta.at("validation_loss").is_null() ? std::nan("") : a.meta.at("validation_loss").get<double>(),
                            a.meta.value("extra", Json::object())};
    restore_params(a, ckpt.model.params(), "model.");
    return ckpt;
}

}  // namespace paradiff
