#include "paradiff/training.hpp"

#include "paradiff/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace paradiff {

void TrainConfig::validate() const {
    model.validate();
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (steps < 0) throw ConfigError("train.steps must be >= 0");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (validation_examples < 1) throw ConfigError("train.validation_examples must be >= 1");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
        throw ConfigError("train.validation_fraction must be in (0, 1)");
    }
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

Json to_json(const TrainConfig& c) {
    return Json{{"model", c.model},
                {"schedule", std::string(to_string(c.schedule))},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"clip_norm", c.clip_norm},
                {"steps", c.steps},
                {"eval_every", c.eval_every},
                {"validation_examples", c.validation_examples},
                {"validation_fraction", c.validation_fraction},
                {"checkpoint_every", c.checkpoint_every},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& context) {
    TrainConfig c;
    StrictReader r(j, context);
    if (const Json* m = r.child("model")) {
        StrictReader mr(*m, r.path("model"));
        mr.get("vocab_size", c.model.vocab_size)
            .get("dim", c.model.dim)
            .get("max_len", c.model.max_len)
            .get("layers", c.model.layers)
            .get("heads", c.model.heads)
            .get("hidden", c.model.hidden)
            .get("steps", c.model.steps)
            .get("positional", c.model.positional);
        mr.finish();
    }
    std::string schedule(to_string(c.schedule));
    r.get("schedule", schedule)
        .get("batch_size", c.batch_size)
        .get("learning_rate", c.learning_rate)
        .get("clip_norm", c.clip_norm)
        .get("steps", c.steps)
        .get("eval_every", c.eval_every)
        .get("validation_examples", c.validation_examples)
        .get("validation_fraction", c.validation_fraction)
        .get("checkpoint_every", c.checkpoint_every)
        .get("seed", c.seed);
    r.finish();
    c.schedule = parse_schedule_kind(schedule);
    return c;
}

ad::Var masked_cross_entropy(ad::Var logits, std::span<const int> targets, std::span<const double> mask) {
    return ad::nll_rows(ad::log_softmax_rows(logits), targets, mask);
}

DenoisingTarget make_target(const TokenSequence& original, int max_len) {
    DenoisingTarget t;
    t.ids = to_model_input(original, max_len, true);
    t.mask.resize(t.ids.size());
    for (std::size_t i = 0; i < t.ids.size(); ++i) t.mask[i] = t.ids[i] != kPadId ? 1.0 : 0.0;
    return t;
}

double batch_loss(const Denoiser& model, const EmbeddingTable& embeddings, const NoiseSchedule& schedule,
                  std::span<const PairExample* const> batch, std::span<const int> t_draws, Rng& rng,
                  Gradients* grads) {
    if (batch.size() != t_draws.size()) throw ContractError("batch_loss: one t draw per example required");
    if (batch.empty()) throw ContractError("batch_loss: empty batch");
    const int L = model.config().max_len;

    std::vector<DenoisingTarget> targets;
    targets.reserve(batch.size());
    double count = 0.0;
    for (const auto* ex : batch) {
        if (ex->original.empty()) throw ContractError("batch_loss: empty original text");
        targets.push_back(make_target(ex->original, L));
        for (double m : targets.back().mask) count += m;
    }

    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& target = targets[i];
        const NoisedLatent x = forward_noise(target.ids, t_draws[i], schedule, embeddings, rng);
        const auto para = to_model_input(batch[i]->paraphrase, L, false);
        const auto valid = valid_mask(para);
        ad::Tape tape;
        ParamBinding binding(tape, model.params(), grads);
        const ad::Var logits = model.forward(binding, x.x, x.t, para, valid, embeddings);
        const ad::Var nll = masked_cross_entropy(logits, target.ids, target.mask);
        total += nll.scalar();
        if (grads != nullptr) tape.backward(nll, 1.0 / count);
    }
    return total / count;
}

PairSplit split_pairs(const std::vector<PairExample>& pairs, double validation_fraction, std::uint64_t seed) {
    PairSplit out;
    std::vector<const PairExample*> unlabeled;
    for (const auto& p : pairs) {
        if (p.meta.value("holdout", false)) continue;
        if (auto it = p.meta.find("split"); it != p.meta.end()) {
            const Split s = parse_split(it->get<std::string>());
            if (s == Split::train) out.train.push_back(p);
            if (s == Split::val) out.validation.push_back(p);
        } else {
            unlabeled.push_back(&p);
        }
    }
    if (!unlabeled.empty()) {
        Rng rng(derive_seed(seed, 0x5B));
        shuffle_in_place(unlabeled, rng);
        const auto n_val = static_cast<std::size_t>(std::ceil(validation_fraction * static_cast<double>(unlabeled.size())));
        for (std::size_t i = 0; i < unlabeled.size(); ++i) {
            (i < n_val ? out.validation : out.train).push_back(*unlabeled[i]);
        }
    }
    return out;
}

namespace {

double validation_loss(const Denoiser& model, const EmbeddingTable& embeddings, const NoiseSchedule& schedule,
                       const std::vector<const PairExample*>& val, std::uint64_t seed) {
    // Same t draws and noise at every evaluation so losses are comparable.
    Rng rng(derive_seed(seed, 0x7A1));
    std::vector<int> ts;
    ts.reserve(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) ts.push_back(rng.uniform_int(1, schedule.steps()));
    return batch_loss(model, embeddings, schedule, val, ts, rng);
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<PairExample>& train_pairs,
                  const std::vector<PairExample>& validation_pairs, const CheckpointCallback& on_checkpoint) {
    config.validate();
    if (train_pairs.empty()) throw ContractError("train: no training pairs");
    if (validation_pairs.empty()) throw ContractError("train: no validation pairs");

    Rng init_rng(derive_seed(config.seed, 0x1A));
    Rng embed_rng(derive_seed(config.seed, 0xE0));
    Rng rng(derive_seed(config.seed, 0x7A));
    const NoiseSchedule schedule(config.schedule, config.model.steps);
    const EmbeddingTable embeddings = EmbeddingTable::unit_rows(config.model.vocab_size, config.model.dim, embed_rng);
    Denoiser model(config.model, init_rng);

    std::vector<const PairExample*> val;
    for (std::size_t i = 0; i < validation_pairs.size() && static_cast<int>(i) < config.validation_examples; ++i) {
        val.push_back(&validation_pairs[i]);
    }

    RmsProp optimizer(model.params(), {config.learning_rate, 0.99, 1e-8, config.clip_norm});
    const double ln_v = std::log(static_cast<double>(config.model.vocab_size));
    const Json extra{{"train_config", to_json(config)}};

    TrainResult result{DenoiserCheckpoint{model, embeddings, config.schedule, 0, 0.0, extra}, {}};
    double best = validation_loss(model, embeddings, schedule, val, config.seed);
    result.best.validation_loss = best;
    result.curve.push_back({0, std::numeric_limits<double>::quiet_NaN(), best});

    int divergent_run = 0;
    std::vector<const PairExample*> batch(static_cast<std::size_t>(config.batch_size));
    std::vector<int> ts(static_cast<std::size_t>(config.batch_size));
    for (int step = 1; step <= config.steps; ++step) {
        for (int b = 0; b < config.batch_size; ++b) {
            batch[static_cast<std::size_t>(b)] =
                &train_pairs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train_pairs.size()) - 1))];
            ts[static_cast<std::size_t>(b)] = rng.uniform_int(1, config.model.steps);
        }
        Gradients grads = model.params().zeros_like();
        const double loss = batch_loss(model, embeddings, schedule, batch, ts, rng, &grads);
        if (!std::isfinite(loss)) {
            throw TrainingAborted("non-finite training loss at step " + std::to_string(step));
        }
        divergent_run = loss > 10.0 * ln_v ? divergent_run + 1 : 0;
        if (divergent_run >= 100) {
            throw TrainingAborted("training diverged: loss above 10 ln V for 100 consecutive steps (step " +
                                  std::to_string(step) + ")");
        }
        optimizer.step(model.params(), grads);
        if (!model.params().all_finite()) {
            throw TrainingAborted("non-finite parameters after step " + std::to_string(step));
        }

        LossRecord rec{step, loss, std::nullopt};
        const bool eval_now = step % config.eval_every == 0 || step == config.steps;
        if (eval_now) {
            const double v = validation_loss(model, embeddings, schedule, val, config.seed);
            rec.val_loss = v;
            if (v < best) {
                best = v;
                result.best = DenoiserCheckpoint{model, embeddings, config.schedule, step, v, extra};
            }
        }
        result.curve.push_back(rec);
        if (on_checkpoint && config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
            on_checkpoint(DenoiserCheckpoint{model, embeddings, config.schedule, step,
                                             rec.val_loss.value_or(std::numeric_limits<double>::quiet_NaN()), extra});
        }
    }
    return result;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
    std::vector<Json> records;
    records.reserve(curve.size());
    for (const auto& r : curve) {
        Json j{{"step", r.step}};
        j["train_loss"] = std::isfinite(r.train_loss) ? Json(r.train_loss) : Json(nullptr);
        j["val_loss"] = r.val_loss ? Json(*r.val_loss) : Json(nullptr);
        records.push_back(std::move(j));
    }
    write_jsonl(path, records);
}

}  // namespace paradiff
