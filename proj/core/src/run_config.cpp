#include "paradiff/run_config.hpp"

#include "paradiff/errors.hpp"

namespace paradiff {

namespace {

enum StageSeed : std::uint64_t { corpus_seed = 1, paraphrase_seed, train_seed, classifier_seed, embedder_seed,
                                 fluency_seed, transfer_seed, eval_seed };

const Json& section(const Json& j, const char* key) {
    static const Json empty = Json::object();
    auto it = j.find(key);
    if (it == j.end()) return empty;
    if (!it->is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
    return *it;
}

bool has_path(const Json& j, std::initializer_list<const char*> keys) {
    const Json* cur = &j;
    for (const char* k : keys) {
        if (!cur->is_object()) return false;
        auto it = cur->find(k);
        if (it == cur->end()) return false;
        cur = &*it;
    }
    return true;
}

template <typename T>
void derive(T& field, const T& value, bool explicit_key, const std::string& key) {
    if (explicit_key && field != value) {
        throw ConfigError("'" + key + "' conflicts with the value derived from the rest of the config");
    }
    field = value;
}

void derive_toy(ToyTrainConfig& c, const Json& j, const char* name, int vocab, int max_len) {
    derive(c.model.vocab_size, vocab, has_path(j, {name, "model", "vocab_size"}), std::string(name) + ".model.vocab_size");
    derive(c.model.max_len, max_len, has_path(j, {name, "model", "max_len"}), std::string(name) + ".model.max_len");
}

}  // namespace

void EvalConfig::validate() const {
    if (items < 1) throw ConfigError("eval.items must be >= 1");
    if (exemplars < 1) throw ConfigError("eval.exemplars must be >= 1");
    for (double l : lambdas) {
        if (!(l >= 0.0)) throw ConfigError("eval.lambdas must be >= 0");
    }
}

Json to_json(const EvalConfig& c) {
    return Json{{"items", c.items}, {"lambdas", c.lambdas}, {"exemplars", c.exemplars}, {"seed", c.seed}};
}

EvalConfig eval_config_from_json(const Json& j, const std::string& context) {
    EvalConfig c;
    StrictReader r(j, context);
    r.get("items", c.items).get("lambdas", c.lambdas).get("exemplars", c.exemplars).get("seed", c.seed);
    r.finish();
    c.validate();
    return c;
}

void RunConfig::validate() const {
    corpus.validate();
    paraphrase.validate();
    train.validate();
    classifier.validate();
    embedder.validate();
    fluency.validate();
    transfer.validate();
    eval.validate();
}

Json to_json(const RunConfig& c) {
    Json classifier = to_json(c.classifier);
    Json embedder = to_json(c.embedder);
    Json fluency = to_json(c.fluency);
    for (Json* t : {&classifier, &embedder, &fluency}) (*t)["model"].erase("outputs");
    return Json{{"seed", c.seed},           {"corpus", to_json(c.corpus)},   {"paraphrase", to_json(c.paraphrase)},
                {"train", to_json(c.train)}, {"classifier", classifier},      {"embedder", embedder},
                {"fluency", fluency},       {"transfer", to_json(c.transfer)}, {"eval", to_json(c.eval)}};
}

RunConfig run_config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    StrictReader top(j, "");
    top.get("seed", c.seed);
    for (const char* key : {"corpus", "paraphrase", "train", "classifier", "embedder", "fluency", "transfer", "eval"}) {
        top.child(key);
    }
    top.finish();

    c.corpus = corpus_spec_from_json(section(j, "corpus"), "corpus");
    c.corpus.validate();  // shape fields below are derived from it
    c.paraphrase = paraphraser_config_from_json(section(j, "paraphrase"), "paraphrase");
    c.train = train_config_from_json(section(j, "train"), "train");
    for (const char* name : {"classifier", "embedder", "fluency"}) {
        const Json& s = section(j, name);
        if (has_path(s, {"model", "outputs"})) {
            throw ConfigError(std::string("'") + name + ".model.outputs' is derived and cannot be set");
        }
    }
    c.classifier = toy_train_config_from_json(section(j, "classifier"), "classifier", c.classifier);
    c.embedder = toy_train_config_from_json(section(j, "embedder"), "embedder", c.embedder);
    c.fluency = toy_train_config_from_json(section(j, "fluency"), "fluency", c.fluency);
    c.transfer = transfer_config_from_json(section(j, "transfer"), "transfer");
    c.eval = eval_config_from_json(section(j, "eval"), "eval");

    // Stage seeds default to streams of the top-level seed.
    auto seed_for = [&](const char* key, std::uint64_t& field, std::uint64_t stage) {
        if (!has_path(j, {key, "seed"})) field = derive_seed(c.seed, stage);
    };
    seed_for("corpus", c.corpus.seed, corpus_seed);
    seed_for("paraphrase", c.paraphrase.seed, paraphrase_seed);
    seed_for("train", c.train.seed, train_seed);
    seed_for("transfer", c.transfer.seed, transfer_seed);
    seed_for("eval", c.eval.seed, eval_seed);

    const Vocabulary vocab = c.corpus.vocabulary();
    derive(c.train.model.vocab_size, vocab.size(), has_path(j, {"train", "model", "vocab_size"}), "train.model.vocab_size");
    derive(c.train.model.max_len, c.corpus.max_len, has_path(j, {"train", "model", "max_len"}), "train.model.max_len");
    for (const char* name : {"classifier", "embedder", "fluency"}) {
        ToyTrainConfig& t = name[0] == 'c' ? c.classifier : (name[0] == 'e' ? c.embedder : c.fluency);
        derive_toy(t, j, name, vocab.size(), c.corpus.max_len);
    }
    c.classifier.model.outputs = c.corpus.styles;
    c.fluency.model.outputs = 2;
    c.embedder.model.outputs = c.embedder.model.dim;
    derive(c.transfer.steps, c.train.model.steps, has_path(j, {"transfer", "steps"}), "transfer.steps");
    derive(c.transfer.schedule, c.train.schedule, has_path(j, {"transfer", "schedule"}), "transfer.schedule");
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void apply_override(Json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(raw);
    } catch (const Json::parse_error&) {
        value = raw;
    }
    Json* cur = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("empty component in override key: " + key);
        if (!cur->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*cur)[part] = value;
            return;
        }
        cur = &(*cur)[part];
        if (cur->is_null()) *cur = Json::object();
        start = dot + 1;
    }
}

}  // namespace paradiff
