#include "paradiff/guidance_models.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace paradiff {

namespace {
constexpr double kKeyWeightFloor = 1e-12;
}

void ToyModelConfig::validate() const {
    if (vocab_size < 1 || max_len < 1 || outputs < 1 || layers < 0) throw ConfigError("toy model: sizes must be positive");
    encoder().validate();
}

void to_json(Json& j, const ToyModelConfig& c) {
    j = Json{{"vocab_size", c.vocab_size}, {"max_len", c.max_len}, {"dim", c.dim},       {"heads", c.heads},
             {"hidden", c.hidden},         {"layers", c.layers},   {"outputs", c.outputs}};
}

void from_json(const Json& j, ToyModelConfig& c) {
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("max_len").get_to(c.max_len);
    j.at("dim").get_to(c.dim);
    j.at("heads").get_to(c.heads);
    j.at("hidden").get_to(c.hidden);
    j.at("layers").get_to(c.layers);
    j.at("outputs").get_to(c.outputs);
}

void to_json(Json& j, const Provenance& p) { j = Json{{"role", p.role}, {"fold", p.fold}, {"seed", p.seed}}; }

void from_json(const Json& j, Provenance& p) {
    j.at("role").get_to(p.role);
    j.at("fold").get_to(p.fold);
    j.at("seed").get_to(p.seed);
}

void check_disjoint(const Provenance& a, const Provenance& b) {
    if (a.seed == b.seed) throw ContractError("models '" + a.role + "' and '" + b.role + "' share seed " + std::to_string(a.seed));
    if (a.fold == b.fold) throw ContractError("models '" + a.role + "' and '" + b.role + "' share data fold " + std::to_string(a.fold));
}

ToyEncoderModel::ToyEncoderModel(const ToyModelConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    embedding_ = params_.add("embedding", random_normal(config_.vocab_size, config_.dim, 1.0, rng));
    positions_ = params_.add("positions", random_normal(config_.max_len, config_.dim, 0.1, rng));
    encoder_ = add_encoder_params(params_, "encoder", config_.encoder(), rng);
    out_weight_ = params_.add("out.weight", random_normal(config_.dim, config_.outputs, 1.0 / std::sqrt(config_.dim), rng));
    out_bias_ = params_.add("out.bias", Matrix::Zero(1, config_.outputs));
}

ad::Var ToyEncoderModel::head(ParamBinding& p, ad::Var soft_embeddings, ad::Var position_weights) const {
    const Eigen::Index n = soft_embeddings.rows();
    if (n < 1 || n > config_.max_len) throw ContractError("toy model: sequence length outside [1, max_len]");
    if (soft_embeddings.cols() != config_.dim) throw ContractError("toy model: embedding width mismatch");
    if (position_weights.rows() != n || position_weights.cols() != 1) throw ContractError("toy model: weights must be N x 1");
    const ad::Var x = soft_embeddings + ad::slice_rows(p[positions_], 0, n);
    // Attention over key j is scaled by its weight: bias log(w_j).
    const ad::Var key_bias = ad::transpose(ad::log(ad::add_scalar(position_weights, kKeyWeightFloor)));
    const ad::Var h = encode(p, encoder_, config_.encoder(), x, key_bias);
    const ad::Var pooled = ad::weighted_mean_rows(h, position_weights);
    return ad::add_row(ad::matmul(pooled, p[out_weight_]), p[out_bias_]);
}

ad::Var ToyEncoderModel::head_ids(ParamBinding& p, std::span<const int> ids) const {
    Matrix w(static_cast<Eigen::Index>(ids.size()), 1);
    for (std::size_t i = 0; i < ids.size(); ++i) w(static_cast<Eigen::Index>(i), 0) = ids[i] == kPadId ? 0.0 : 1.0;
    return head(p, ad::gather_rows(p[embedding_], ids), p.tape().constant(std::move(w)));
}

ToyAttributeClassifier::ToyAttributeClassifier(const ToyModelConfig& config, Rng& rng, Provenance provenance)
    : body_(config, rng), provenance_(std::move(provenance)) {
    if (config.outputs < 2) throw ContractError("classifier needs at least two classes");
}

namespace {

// Generated outputs may fill every position, leaving no room for </s>.
std::vector<int> model_input(const TokenSequence& text, int max_len) {
    return to_model_input(text, max_len, static_cast<int>(text.size()) < max_len);
}

}  // namespace

std::vector<int> ToyAttributeClassifier::encode_input(const TokenSequence& text) const {
    return model_input(text, body_.config().max_len);
}

ad::Var ToyAttributeClassifier::class_log_probs(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const {
    ParamBinding p(tape, body_.params());
    return ad::log_softmax_rows(body_.head(p, soft_embeddings, position_weights));
}

int ToyAttributeClassifier::predict(const TokenSequence& text) const {
    const Vector probs = class_probs(text);
    Eigen::Index best = 0;
    probs.maxCoeff(&best);
    return static_cast<int>(best);
}

ToyStyleEmbedder::ToyStyleEmbedder(const ToyModelConfig& config, Rng& rng, Provenance provenance)
    : body_(config, rng), provenance_(std::move(provenance)) {}

std::vector<int> ToyStyleEmbedder::encode_input(const TokenSequence& text) const {
    return model_input(text, body_.config().max_len);
}

ad::Var ToyStyleEmbedder::style_vector(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const {
    ParamBinding p(tape, body_.params());
    return body_.head(p, soft_embeddings, position_weights);
}

ToyFluencyScorer::ToyFluencyScorer(const ToyModelConfig& config, Rng& rng, Provenance provenance)
    : classifier_(config, rng, std::move(provenance)) {
    if (config.outputs != 2) throw ContractError("fluency scorer is a binary classifier");
}

double ToyFluencyScorer::fluency(const TokenSequence& text) const {
    if (text.empty()) return 0.0;
    return classifier_.class_probs(text)(1);
}

void ToyTrainConfig::validate() const {
    model.validate();
    if (steps < 0 || batch_size < 1) throw ConfigError("toy training: steps >= 0 and batch_size >= 1 required");
    if (!(learning_rate > 0.0)) throw ConfigError("toy training: learning_rate must be > 0");
    if (!(temperature > 0.0)) throw ConfigError("toy training: temperature must be > 0");
}

Json to_json(const ToyTrainConfig& c) {
    return Json{{"model", c.model},
                {"steps", c.steps},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"temperature", c.temperature}};
}

ToyTrainConfig toy_train_config_from_json(const Json& j, const std::string& context, ToyTrainConfig defaults) {
    ToyTrainConfig c = std::move(defaults);
    StrictReader r(j, context);
    if (const Json* m = r.child("model")) {
        StrictReader mr(*m, r.path("model"));
        mr.get("vocab_size", c.model.vocab_size)
            .get("max_len", c.model.max_len)
            .get("dim", c.model.dim)
            .get("heads", c.model.heads)
            .get("hidden", c.model.hidden)
            .get("layers", c.model.layers)
            .get("outputs", c.model.outputs);
        mr.finish();
    }
    r.get("steps", c.steps).get("batch_size", c.batch_size).get("learning_rate", c.learning_rate).get("temperature", c.temperature);
    r.finish();
    return c;
}

namespace {

// Generic minibatch loop: batch_loss fills gradients for one step.
template <typename BatchLoss>
void fit(ParamSet& params, const ToyTrainConfig& config, std::uint64_t seed, BatchLoss&& batch_loss) {
    Rng rng(derive_seed(seed, 0xF17));
    RmsProp opt(params, {config.learning_rate, 0.99, 1e-8, 1.0});
    for (int step = 0; step < config.steps; ++step) {
        Gradients grads = params.zeros_like();
        const double loss = batch_loss(grads, rng);
        if (!std::isfinite(loss)) throw TrainingAborted("toy model: non-finite loss at step " + std::to_string(step));
        opt.step(params, grads);
    }
}

double classification_step(const ToyEncoderModel& body, const std::vector<LabeledExample>& data, int batch_size,
                           Gradients& grads, Rng& rng) {
    double total = 0.0;
    const int max_len = body.config().max_len;
    for (int b = 0; b < batch_size; ++b) {
        const auto& ex = data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.size()) - 1))];
        const auto ids = to_model_input(ex.tokens, max_len, true);
        ad::Tape tape;
        ParamBinding p(tape, body.params(), &grads);
        const ad::Var lp = ad::log_softmax_rows(body.head_ids(p, ids));
        const int target = ex.label;
        const double one = 1.0;
        const ad::Var nll = ad::nll_rows(lp, std::span<const int>(&target, 1), std::span<const double>(&one, 1));
        total += nll.scalar();
        tape.backward(nll, 1.0 / batch_size);
    }
    return total / batch_size;
}

}  // namespace

double classifier_accuracy(const ToyAttributeClassifier& model, const std::vector<LabeledExample>& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& ex : data) correct += model.predict(ex.tokens) == ex.label ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

ToyAttributeClassifier train_classifier(const std::vector<LabeledExample>& train,
                                        const std::vector<LabeledExample>& heldout, const ToyTrainConfig& config,
                                        Provenance provenance, ClassifierReport* report) {
    config.validate();
    std::set<int> classes;
    for (const auto& ex : train) {
        if (ex.label < 0 || ex.label >= config.model.outputs) throw ContractError("classifier: label outside [0, classes)");
        classes.insert(ex.label);
    }
    if (classes.size() < 2) throw ContractError("classifier: training data must contain at least two classes");
    Rng init(derive_seed(provenance.seed, 0x11));
    ToyAttributeClassifier model(config.model, init, provenance);
    fit(model.body().params(), config, provenance.seed, [&](Gradients& g, Rng& rng) {
        return classification_step(model.body(), train, config.batch_size, g, rng);
    });
    const double acc = classifier_accuracy(model, heldout.empty() ? train : heldout);
    if (report) report->heldout_accuracy = acc;
    if (acc < 0.75) {
        throw ContractError("classifier reached only " + std::to_string(acc) +
                            " held-out accuracy (< 0.75); enlarge the corpus or train longer");
    }
    return model;
}

EmbedderReport author_separation(const StyleModel& model, const std::vector<LabeledExample>& by_author) {
    Matrix v(static_cast<Eigen::Index>(by_author.size()), model.style_dim());
    for (std::size_t i = 0; i < by_author.size(); ++i) {
        v.row(static_cast<Eigen::Index>(i)) = model.style_vector(by_author[i].tokens).normalized().transpose();
    }
    const Matrix sims = v * v.transpose();
    double same = 0.0, diff = 0.0;
    long n_same = 0, n_diff = 0;
    for (std::size_t i = 0; i < by_author.size(); ++i) {
        for (std::size_t j = i + 1; j < by_author.size(); ++j) {
            const double s = sims(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (by_author[i].label == by_author[j].label) {
                same += s;
                ++n_same;
            } else {
                diff += s;
                ++n_diff;
            }
        }
    }
    return {n_same ? same / static_cast<double>(n_same) : 0.0, n_diff ? diff / static_cast<double>(n_diff) : 0.0};
}

ToyStyleEmbedder train_style_embedder(const std::vector<LabeledExample>& train_by_author,
                                      const std::vector<LabeledExample>& heldout_by_author,
                                      const ToyTrainConfig& config, Provenance provenance, EmbedderReport* report) {
    config.validate();
    std::map<int, std::vector<std::size_t>> by_author;
    for (std::size_t i = 0; i < train_by_author.size(); ++i) by_author[train_by_author[i].label].push_back(i);
    std::vector<int> authors;
    for (const auto& [a, idx] : by_author) {
        if (idx.size() >= 8) authors.push_back(a);
    }
    if (authors.size() < 4) throw ContractError("style embedder: need >= 4 authors with >= 8 texts each");

    Rng init(derive_seed(provenance.seed, 0x5E));
    ToyStyleEmbedder model(config.model, init, provenance);
    const int max_len = config.model.max_len;
    const int batch = std::min<int>(config.batch_size, static_cast<int>(authors.size()));
    const double inv_temp = 1.0 / config.temperature;

    fit(model.body().params(), config, provenance.seed, [&](Gradients& g, Rng& rng) {
        std::vector<int> pool = authors;
        shuffle_in_place(pool, rng);
        ad::Tape tape;
        ParamBinding p(tape, model.body().params(), &g);
        std::vector<ad::Var> anchors, positives;
        for (int b = 0; b < batch; ++b) {
            const auto& idx = by_author[pool[static_cast<std::size_t>(b)]];
            const int i = rng.uniform_int(0, static_cast<int>(idx.size()) - 1);
            int j = rng.uniform_int(0, static_cast<int>(idx.size()) - 2);
            if (j >= i) ++j;
            anchors.push_back(model.body().head_ids(p, to_model_input(train_by_author[idx[static_cast<std::size_t>(i)]].tokens, max_len, true)));
            positives.push_back(model.body().head_ids(p, to_model_input(train_by_author[idx[static_cast<std::size_t>(j)]].tokens, max_len, true)));
        }
        const ad::Var a = ad::l2_normalize_rows(ad::concat_rows(anchors));
        const ad::Var q = ad::l2_normalize_rows(ad::concat_rows(positives));
        std::vector<int> diag(static_cast<std::size_t>(batch));
        for (int b = 0; b < batch; ++b) diag[static_cast<std::size_t>(b)] = b;
        const std::vector<double> ones(static_cast<std::size_t>(batch), 1.0);
        const ad::Var l1 = ad::nll_rows(ad::log_softmax_rows(ad::scale(ad::matmul_nt(a, q), inv_temp)), diag, ones);
        const ad::Var l2 = ad::nll_rows(ad::log_softmax_rows(ad::scale(ad::matmul_nt(q, a), inv_temp)), diag, ones);
        const ad::Var loss = ad::scale(l1 + l2, 0.5 / batch);
        tape.backward(loss);
        return loss.scalar();
    });

    const EmbedderReport r = author_separation(model, heldout_by_author.empty() ? train_by_author : heldout_by_author);
    if (report) *report = r;
    if (r.margin() < 0.05) {
        throw ContractError("style embedder: held-out same/different author margin " + std::to_string(r.margin()) +
                            " is below 0.05");
    }
    return model;
}

TokenSequence shuffled_corruption(const TokenSequence& text, Rng& rng) {
    TokenSequence out = text;
    for (int attempt = 0; attempt < 8; ++attempt) {
        shuffle_in_place(out.ids, rng);
        if (out != text) break;
    }
    return out;
}

double roc_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw ContractError("roc_auc: both classes need scores");
    double wins = 0.0;
    for (double p : pos) {
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double fluency_auc(const ToyFluencyScorer& model, const std::vector<TokenSequence>& texts, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xA0C));
    std::vector<double> pos, neg;
    for (const auto& t : texts) {
        const TokenSequence s = shuffled_corruption(t, rng);
        if (s == t) continue;
        pos.push_back(model.fluency(t));
        neg.push_back(model.fluency(s));
    }
    return roc_auc(pos, neg);
}

ToyFluencyScorer train_fluency_scorer(const std::vector<TokenSequence>& train, const std::vector<TokenSequence>& heldout,
                                      const ToyTrainConfig& config, Provenance provenance, FluencyReport* report) {
    config.validate();
    if (train.empty()) throw ContractError("fluency scorer: no training texts");
    ToyTrainConfig cfg = config;
    cfg.model.outputs = 2;
    Rng init(derive_seed(provenance.seed, 0xF1));
    ToyFluencyScorer model(cfg.model, init, provenance);
    fit(model.classifier().body().params(), cfg, provenance.seed, [&](Gradients& g, Rng& rng) {
        std::vector<LabeledExample> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& t = train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(train.size()) - 1))];
            if (b % 2 == 0) {
                batch.push_back({t, 1});
            } else {
                batch.push_back({shuffled_corruption(t, rng), 0});
            }
        }
        // Every example once per step, in order.
        double total = 0.0;
        for (const auto& ex : batch) {
            const auto ids = to_model_input(ex.tokens, cfg.model.max_len, true);
            ad::Tape tape;
            ParamBinding p(tape, model.classifier().body().params(), &g);
            const ad::Var lp = ad::log_softmax_rows(model.classifier().body().head_ids(p, ids));
            const double one = 1.0;
            const ad::Var nll = ad::nll_rows(lp, std::span<const int>(&ex.label, 1), std::span<const double>(&one, 1));
            total += nll.scalar();
            tape.backward(nll, 1.0 / cfg.batch_size);
        }
        return total / cfg.batch_size;
    });
    const double auc = fluency_auc(model, heldout.empty() ? train : heldout, provenance.seed);
    if (report) report->heldout_auc = auc;
    if (!(auc > 0.9)) throw ContractError("fluency scorer: held-out AUC " + std::to_string(auc) + " is not above 0.9");
    return model;
}

namespace {

Archive model_archive(const std::string& kind, const ToyEncoderModel& body, const Provenance& provenance, const Json& extra) {
    Archive a;
    a.meta = Json{{"kind", kind}, {"config", body.config()}, {"provenance", provenance}, {"extra", extra.is_null() ? Json::object() : extra}};
    store_params(a, body.params());
    return a;
}

Archive open_model(const std::filesystem::path& path, const std::string& kind) {
    Archive a = read_archive(path);
    if (a.meta.value("kind", "") != kind) throw ContractError(path.string() + " is not a " + kind + " file");
    return a;
}

}  // namespace

void save_classifier(const std::filesystem::path& path, const ToyAttributeClassifier& model, const Json& extra) {
    write_archive(path, model_archive("attribute_classifier", model.body(), model.provenance(), extra));
}

ToyAttributeClassifier load_classifier(const std::filesystem::path& path) {
    const Archive a = open_model(path, "attribute_classifier");
    Rng unused(0);
    ToyAttributeClassifier m(a.meta.at("config").get<ToyModelConfig>(), unused, a.meta.at("provenance").get<Provenance>());
    restore_params(a, m.body().params());
    return m;
}

void save_style_embedder(const std::filesystem::path& path, const ToyStyleEmbedder& model, const Json& extra) {
    write_archive(path, model_archive("style_embedder", model.body(), model.provenance(), extra));
}

ToyStyleEmbedder load_style_embedder(const std::filesystem::path& path) {
    const Archive a = open_model(path, "style_embedder");
    Rng unused(0);
    ToyStyleEmbedder m(a.meta.at("config").get<ToyModelConfig>(), unused, a.meta.at("provenance").get<Provenance>());
    restore_params(a, m.body().params());
    return m;
}

void save_fluency_scorer(const std::filesystem::path& path, const ToyFluencyScorer& model, const Json& extra) {
    write_archive(path, model_archive("fluency_scorer", model.classifier().body(), model.classifier().provenance(), extra));
}

ToyFluencyScorer load_fluency_scorer(const std::filesystem::path& path) {
    const Archive a = open_model(path, "fluency_scorer");
    Rng unused(0);
    ToyFluencyScorer m(a.meta.at("config").get<ToyModelConfig>(), unused, a.meta.at("provenance").get<Provenance>());
    restore_params(a, m.classifier().body().params());
    return m;
}

}  // namespace paradiff
