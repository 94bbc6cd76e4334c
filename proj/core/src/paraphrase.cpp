#include "paradiff/paraphrase.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace paradiff {

void ParaphraserConfig::validate() const {
    if (swap_rate < 0.0 || swap_rate > 1.0) throw ConfigError("paraphrase.swap_rate must be in [0, 1]");
    if (strategy == ParaphraseStrategy::external_adapter && command.empty()) {
        throw ConfigError("paraphrase.command is required for the external_adapter strategy");
    }
}

Json to_json(const ParaphraserConfig& c) {
    return Json{{"strategy", c.strategy == ParaphraseStrategy::toy_rule ? "toy_rule" : "external_adapter"},
                {"seed", c.seed},
                {"swap_rate", c.swap_rate},
                {"strip_markers", c.strip_markers},
                {"command", c.command}};
}

ParaphraserConfig paraphraser_config_from_json(const Json& j, const std::string& context) {
    ParaphraserConfig c;
    std::string strategy = "toy_rule";
    StrictReader r(j, context);
    r.get("strategy", strategy).get("seed", c.seed).get("swap_rate", c.swap_rate).get("strip_markers", c.strip_markers).get("command", c.command);
    r.finish();
    if (strategy == "toy_rule") {
        c.strategy = ParaphraseStrategy::toy_rule;
    } else if (strategy == "external_adapter") {
        c.strategy = ParaphraseStrategy::external_adapter;
    } else {
        throw ConfigError("unknown value for '" + r.path("strategy") + "': " + strategy);
    }
    c.validate();
    return c;
}

TokenSequence toy_paraphrase(const TokenSequence& w, const Vocabulary& vocab, double swap_rate, bool strip_markers,
                             Rng& rng) {
    if (w.empty()) throw ContractError("paraphrase: empty input");
    std::vector<std::vector<int>> clauses(1);
    for (int id : w.ids) {
        if (id == kSepId) {
            clauses.emplace_back();
            continue;
        }
        if (strip_markers && vocab.is_marker(id)) continue;
        if (const int cls = vocab.content_class(id); cls >= 0 && vocab.synonyms() > 1 && rng.bernoulli(swap_rate)) {
            const int syn = (vocab.synonym_index(id) + rng.uniform_int(1, vocab.synonyms() - 1)) % vocab.synonyms();
            id = vocab.content_id(cls, syn);
        }
        clauses.back().push_back(id);
    }
    TokenSequence out;
    for (std::size_t c = 0; c < clauses.size(); ++c) {
        auto& clause = clauses[c];
        for (std::size_t i = 0; i + 1 < clause.size(); ++i) {
            if (rng.bernoulli(swap_rate)) {
                std::swap(clause[i], clause[i + 1]);
                ++i;
            }
        }
        if (c > 0) out.ids.push_back(kSepId);
        out.ids.insert(out.ids.end(), clause.begin(), clause.end());
    }
    return out;
}

std::vector<TokenSequence> run_external_paraphraser(const std::string& command, const std::vector<TokenSequence>& inputs,
                                                    const Vocabulary& vocab) {
    if (inputs.empty()) return {};
    const auto dir = std::filesystem::temp_directory_path();
    const std::string stem = "paradiff_para_" + std::to_string(::getpid()) + "_" +
                             std::to_string(reinterpret_cast<std::uintptr_t>(&inputs));
    const auto in_path = dir / (stem + ".in");
    const auto out_path = dir / (stem + ".out");
    {
        std::string text;
        for (const auto& s : inputs) {
            if (s.empty()) throw ContractError("paraphrase: empty input");
            text += vocab.decode(s.ids);
            text += '\n';
        }
        write_text_file(in_path, text);
    }
    const std::string shell = "(" + command + ") < '" + in_path.string() + "' > '" + out_path.string() + "'";
    const int rc = std::system(shell.c_str());
    std::filesystem::remove(in_path);
    if (rc != 0) {
        std::filesystem::remove(out_path);
        throw IoError("external paraphraser failed (exit " + std::to_string(rc) + "): " + command);
    }
    std::vector<TokenSequence> out;
    {
        std::ifstream in(out_path);
        std::string line;
        while (std::getline(in, line)) out.push_back(TokenSequence{vocab.encode(line)});
    }
    std::filesystem::remove(out_path);
    if (out.size() != inputs.size()) {
        throw IoError("external paraphraser returned " + std::to_string(out.size()) + " lines for " +
                      std::to_string(inputs.size()) + " inputs: " + command);
    }
    return out;
}

Paraphraser::Paraphraser(ParaphraserConfig config, Vocabulary vocab) : config_(std::move(config)), vocab_(vocab) {
    config_.validate();
}

TokenSequence Paraphraser::paraphrase(const TokenSequence& w, Rng& rng) const {
    if (w.empty()) throw ContractError("paraphrase: empty input");
    if (config_.strategy == ParaphraseStrategy::external_adapter) {
        return run_external_paraphraser(config_.command, {w}, vocab_).front();
    }
    return toy_paraphrase(w, vocab_, config_.swap_rate, config_.strip_markers, rng);
}

std::vector<TokenSequence> Paraphraser::paraphrase_all(const std::vector<TokenSequence>& inputs) const {
    if (config_.strategy == ParaphraseStrategy::external_adapter) {
        return run_external_paraphraser(config_.command, inputs, vocab_);
    }
    std::vector<TokenSequence> out;
    out.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Rng rng(derive_seed(config_.seed, i));
        out.push_back(paraphrase(inputs[i], rng));
    }
    return out;
}

std::vector<int> content_classes(const TokenSequence& w, const Vocabulary& vocab) {
    std::vector<int> out;
    for (int id : w.ids) {
        if (const int c = vocab.content_class(id); c >= 0) out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<PairExample> build_pairs(const Corpus& corpus, const Paraphraser& paraphraser) {
    std::vector<TokenSequence> originals;
    originals.reserve(corpus.texts.size());
    for (const auto& t : corpus.texts) originals.push_back(t.tokens);
    const auto paraphrases = paraphraser.paraphrase_all(originals);
    std::vector<PairExample> out;
    out.reserve(originals.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        const auto& t = corpus.texts[i];
        out.push_back({t.tokens, paraphrases[i],
                       Json{{"index", i},
                            {"attribute", t.attribute},
                            {"author", t.author},
                            {"split", std::string(to_string(t.split))},
                            {"holdout", t.holdout}}});
    }
    return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<PairExample>& pairs, const Json& header) {
    std::vector<Json> records;
    records.reserve(pairs.size() + 1);
    Json h = header;
    h["format"] = "paradiff.pairs";
    h["version"] = 1;
    h["count"] = pairs.size();
    records.push_back(Json{{"header", h}});
    for (const auto& p : pairs) {
        records.push_back(Json{{"original", p.original.ids}, {"paraphrase", p.paraphrase.ids}, {"meta", p.meta}});
    }
    write_jsonl(path, records);
}

std::vector<PairExample> read_pairs(const std::filesystem::path& path, Json* header) {
    auto records = read_jsonl(path);
    if (records.empty() || !records.front().contains("header")) {
        throw IoError("pairs file lacks a header record: " + path.string());
    }
    if (header) *header = records.front().at("header");
    std::vector<PairExample> out;
    for (std::size_t i = 1; i < records.size(); ++i) {
        PairExample p;
        records[i].at("original").get_to(p.original.ids);
        records[i].at("paraphrase").get_to(p.paraphrase.ids);
        p.meta = records[i].value("meta", Json::object());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace paradiff
