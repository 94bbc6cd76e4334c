#include "paradiff/inference.hpp"

#include "paradiff/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

namespace paradiff {

namespace {

std::string_view to_string(GradientRule r) { return r == GradientRule::recompute ? "recompute" : "literal"; }

GradientRule parse_gradient_rule(std::string_view s) {
    if (s == "recompute") return GradientRule::recompute;
    if (s == "literal") return GradientRule::literal;
    throw ConfigError("unknown gradient rule: " + std::string(s));
}

std::string_view to_string(RenoiseRule r) { return r == RenoiseRule::posterior_step ? "posterior_step" : "literal_loop"; }

RenoiseRule parse_renoise_rule(std::string_view s) {
    if (s == "posterior_step") return RenoiseRule::posterior_step;
    if (s == "literal_loop") return RenoiseRule::literal_loop;
    throw ConfigError("unknown renoise rule: " + std::string(s));
}

constexpr double kMassSlack = 1e-12;

}  // namespace

void TransferConfig::validate() const {
    if (steps < 1) throw ConfigError("transfer.steps must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("transfer.top_p must be in (0, 1]");
    if (max_retries < 0) throw ConfigError("transfer.max_retries must be >= 0");
    if (guidance.k < 1) throw ConfigError("transfer.guidance.k must be >= 1");
    if (!(guidance.tau > 0.0)) throw ConfigError("transfer.guidance.tau must be > 0");
    if (!(guidance.lambda >= 0.0)) throw ConfigError("transfer.guidance.lambda must be >= 0");
}

Json to_json(const TransferConfig& c) {
    return Json{{"steps", c.steps},
                {"schedule", std::string(to_string(c.schedule))},
                {"top_p", c.top_p},
                {"seed", c.seed},
                {"max_retries", c.max_retries},
                {"renoise", std::string(to_string(c.renoise))},
                {"mask_after_eos", c.mask_after_eos},
                {"truncate_after_eos", c.truncate_after_eos},
                {"guidance",
                 {{"mode", std::string(to_string(c.guidance.mode))},
                  {"target_class", c.guidance.target_class},
                  {"lambda", c.guidance.lambda},
                  {"k", c.guidance.k},
                  {"tau", c.guidance.tau},
                  {"rule", std::string(to_string(c.guidance.rule))}}}};
}

TransferConfig transfer_config_from_json(const Json& j, const std::string& context) {
    TransferConfig c;
    StrictReader r(j, context);
    std::string schedule(to_string(c.schedule)), renoise(to_string(c.renoise));
    r.get("steps", c.steps).get("schedule", schedule).get("top_p", c.top_p).get("seed", c.seed);
    r.get("max_retries", c.max_retries).get("renoise", renoise).get("mask_after_eos", c.mask_after_eos);
    r.get("truncate_after_eos", c.truncate_after_eos);
    if (const Json* g = r.child("guidance")) {
        StrictReader gr(*g, r.path("guidance"));
        std::string mode(to_string(c.guidance.mode)), rule(to_string(c.guidance.rule));
        gr.get("mode", mode).get("target_class", c.guidance.target_class).get("lambda", c.guidance.lambda);
        gr.get("k", c.guidance.k).get("tau", c.guidance.tau).get("rule", rule);
        gr.finish();
        c.guidance.mode = parse_guidance_mode(mode);
        c.guidance.rule = parse_gradient_rule(rule);
    }
    r.finish();
    c.schedule = parse_schedule_kind(schedule);
    c.renoise = parse_renoise_rule(renoise);
    c.validate();
    return c;
}

int top_p_sample(const Vector& probs, double p, Rng& rng) {
    if (!(p > 0.0)) throw DomainError("top_p_sample: p must be > 0");
    if (probs.size() == 0) throw ContractError("top_p_sample: empty distribution");
    std::vector<int> order(static_cast<std::size_t>(probs.size()));
    std::iota(order.begin(), order.end(), 0);
    // Stable so equal probabilities keep id order; sampling stays reproducible.
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs(a) > probs(b); });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size()) {
        mass += probs(order[keep]);
        ++keep;
        if (mass >= p - kMassSlack) break;
    }
    const double u = rng.uniform() * mass;
    double acc = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        acc += probs(order[i]);
        if (u < acc) return order[i];
    }
    return order[keep - 1];
}

Json to_json(const TransferRecord& r, const Vocabulary& vocab) {
    Json j{{"item", r.item},
           {"source", vocab.decode(r.source.ids)},
           {"paraphrase", vocab.decode(r.paraphrase.ids)},
           {"output", vocab.decode(r.output.ids)},
           {"lambda", r.lambda},
           {"mode", std::string(to_string(r.mode))},
           {"retries", r.retries},
           {"seed", r.seed},
           {"direction", r.direction},
           {"guidance_aborted", r.guidance.aborted}};
    if (r.empty_output) j["error"] = "empty_output";
    return j;
}

TransferRecord transfer_record_from_json(const Json& j, const Vocabulary& vocab) {
    TransferRecord r;
    r.item = j.at("item").get<long>();
    r.source.ids = vocab.encode(j.at("source").get<std::string>());
    r.paraphrase.ids = vocab.encode(j.at("paraphrase").get<std::string>());
    r.output.ids = vocab.encode(j.at("output").get<std::string>());
    r.lambda = j.at("lambda").get<double>();
    r.mode = parse_guidance_mode(j.at("mode").get<std::string>());
    r.retries = j.at("retries").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.direction = j.value("direction", "");
    r.guidance.aborted = j.value("guidance_aborted", 0L);
    r.empty_output = j.contains("error");
    return r;
}

void write_transfers(const std::filesystem::path& path, const std::vector<TransferRecord>& records,
                     const Vocabulary& vocab) {
    std::vector<Json> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(to_json(r, vocab));
    write_jsonl(path, lines);
}

std::vector<TransferRecord> read_transfers(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::vector<TransferRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(transfer_record_from_json(j, vocab));
    return out;
}

void canonicalize_sample(std::vector<int>& ids) {
    const auto end = std::find_if(ids.begin(), ids.end(), [](int id) { return id == kEosId || id == kPadId; });
    if (end == ids.end()) return;
    std::fill(end + 1, ids.end(), kPadId);
}

namespace {

// Positions the guidance model may see: everything up to and including the
// first </s> (or pad) of the last sample.
std::vector<double> visible_positions(const std::vector<int>& sample) {
    std::vector<double> mask(sample.size(), 0.0);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        mask[i] = 1.0;
        if (sample[i] == kEosId || sample[i] == kPadId) break;
    }
    return mask;
}

std::vector<int> reverse_process(const std::vector<int>& paraphrase_ids, const std::vector<char>& paraphrase_valid,
                                 const TransferConfig& cfg, const DenoiserCheckpoint& checkpoint,
                                 const NoiseSchedule& schedule, const GuidanceObjective* objective,
                                 const TokenSampler& sampler, Rng& rng, GuidanceStats& stats) {
    const auto& mc = checkpoint.model.config();
    const int T = cfg.steps;
    NoisedLatent x = initial_latent(mc.max_len, mc.dim, T, rng);
    std::vector<int> sample(static_cast<std::size_t>(mc.max_len), kPadId);
    std::vector<double> mask;
    for (int t = T; t >= 1; --t) {
        const Matrix logits = checkpoint.model.predict_logits(x, paraphrase_ids, paraphrase_valid, checkpoint.embeddings);
        if (cfg.mask_after_eos && t < T) mask = visible_positions(sample);
        const Matrix guided = apply_guidance(logits, cfg.guidance, t, T, objective, mask, &stats);
        for (Eigen::Index r = 0; r < guided.rows(); ++r) {
            const Eigen::RowVectorXd row = guided.row(r);
            const Eigen::RowVectorXd e = (row.array() - row.maxCoeff()).exp();
            const Vector probs = (e / e.sum()).transpose();
            sample[static_cast<std::size_t>(r)] = sampler(probs, cfg.top_p, rng);
        }
        if (cfg.truncate_after_eos) canonicalize_sample(sample);
        if (t > 1) x = renoise(sample, t - 1, schedule, checkpoint.embeddings, rng, cfg.renoise);
    }
    canonicalize_sample(sample);
    return sample;
}

}  // namespace

TransferRecord transfer_paraphrase(const TokenSequence& source, const TokenSequence& paraphrase, long item,
                                   const TransferConfig& cfg, const DenoiserCheckpoint& checkpoint,
                                   const GuidanceObjective* objective, const TransferHooks& hooks) {
    cfg.validate();
    const auto& mc = checkpoint.model.config();
    if (cfg.steps != mc.steps) {
        throw ContractError("transfer: T=" + std::to_string(cfg.steps) + " but the checkpoint was trained with T=" +
                            std::to_string(mc.steps));
    }
    if (cfg.schedule != checkpoint.schedule) {
        throw ContractError("transfer: schedule '" + std::string(to_string(cfg.schedule)) +
                            "' differs from the checkpoint's '" + std::string(to_string(checkpoint.schedule)) + "'");
    }
    if (cfg.guidance.mode != GuidanceMode::none && cfg.guidance.lambda > 0.0 && objective == nullptr) {
        throw ContractError("transfer: guided run without a guidance objective");
    }
    const std::vector<int> para_ids = to_model_input(paraphrase, mc.max_len, false);
    const std::vector<char> para_valid = valid_mask(para_ids);
    const NoiseSchedule schedule = checkpoint.noise_schedule();
    const TokenSampler& sampler = hooks.sampler ? hooks.sampler : TokenSampler(top_p_sample);

    TransferRecord rec;
    rec.item = item;
    rec.source = source;
    rec.paraphrase = paraphrase;
    rec.lambda = cfg.guidance.lambda;
    rec.mode = cfg.guidance.mode;
    rec.seed = cfg.seed;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(item), static_cast<std::uint64_t>(attempt)));
        if (hooks.passes) ++*hooks.passes;
        rec.retries = attempt;
        rec.output = strip_padding(
            reverse_process(para_ids, para_valid, cfg, checkpoint, schedule, objective, sampler, rng, rec.guidance));
        if (!rec.output.empty()) return rec;
    }
    rec.empty_output = true;
    spdlog::warn("transfer item {}: empty output after {} retries", item, cfg.max_retries);
    return rec;
}

TransferRecord transfer(const TokenSequence& w, long item, const TransferConfig& cfg,
                        const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                        const GuidanceObjective* objective, const TransferHooks& hooks) {
    Rng rng(derive_seed(paraphraser.config().seed, static_cast<std::uint64_t>(item)));
    return transfer_paraphrase(w, paraphraser.paraphrase(w, rng), item, cfg, checkpoint, objective, hooks);
}

std::unique_ptr<GuidanceObjective> make_objective(const GuidanceSpec& spec, const GuidanceModels& models) {
    switch (spec.mode) {
        case GuidanceMode::none: return nullptr;
        case GuidanceMode::attribute:
            if (!models.attribute) throw DependencyError("attribute guidance needs an attribute classifier");
            return std::make_unique<AttributeObjective>(*models.attribute, spec.target_class, spec.tau);
        case GuidanceMode::style:
            if (!models.style) throw DependencyError("style guidance needs a style embedder");
            return std::make_unique<StyleObjective>(*models.style, spec.exemplars, spec.tau);
    }
    return nullptr;
}

std::vector<TransferRecord> transfer_batch(const std::vector<TransferRequest>& requests, const TransferConfig& cfg,
                                           const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                                           const GuidanceModels& models, const TransferHooks& hooks) {
    std::vector<TokenSequence> sources;
    sources.reserve(requests.size());
    for (const auto& r : requests) sources.push_back(r.source);
    const std::vector<TokenSequence> paraphrases = paraphraser.paraphrase_all(sources);

    std::vector<TransferRecord> out;
    out.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
        TransferConfig item_cfg = cfg;
        item_cfg.guidance.target_class = requests[i].target_class;
        item_cfg.guidance.exemplars = requests[i].target_exemplars;
        std::unique_ptr<GuidanceObjective> objective;
        if (item_cfg.guidance.lambda > 0.0) {
            item_cfg.guidance.validate();
            objective = make_objective(item_cfg.guidance, models);
        }
        TransferRecord rec = transfer_paraphrase(requests[i].source, paraphrases[i], static_cast<long>(i), item_cfg,
                                                 checkpoint, objective.get(), hooks);
        rec.direction = requests[i].direction;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace paradiff
