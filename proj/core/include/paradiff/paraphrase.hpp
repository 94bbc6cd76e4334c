#pragma once

#include "paradiff/corpus.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace paradiff {

enum class ParaphraseStrategy { toy_rule, external_adapter };

struct ParaphraserConfig {
    ParaphraseStrategy strategy = ParaphraseStrategy::toy_rule;
    std::uint64_t seed = 7;
    // Probability of a synonym substitution per content token, and of an
    // adjacent transposition per position inside a clause.
    double swap_rate = 0.5;
    bool strip_markers = true;
    // external_adapter: shell command reading one whitespace-separated token
    // line per input on stdin and writing exactly one line per input to stdout.
    std::string command;

    void validate() const;
};

Json to_json(const ParaphraserConfig& c);
ParaphraserConfig paraphraser_config_from_json(const Json& j, const std::string& context = "paraphrase");

struct PairExample {
    TokenSequence original;
    TokenSequence paraphrase;
    Json meta = Json::object();
};

// Marker strip, synonym substitution and within-clause adjacent swaps. The
// multiset of content classes is preserved exactly.
TokenSequence toy_paraphrase(const TokenSequence& w, const Vocabulary& vocab, double swap_rate, bool strip_markers,
                             Rng& rng);

// Runs the adapter command once over all inputs.
std::vector<TokenSequence> run_external_paraphraser(const std::string& command, const std::vector<TokenSequence>& inputs,
                                                    const Vocabulary& vocab);

class Paraphraser {
public:
    Paraphraser(ParaphraserConfig config, Vocabulary vocab);

    const ParaphraserConfig& config() const { return config_; }

    TokenSequence paraphrase(const TokenSequence& w, Rng& rng) const;
    // Item i draws from the stream derive_seed(config.seed, i).
    std::vector<TokenSequence> paraphrase_all(const std::vector<TokenSequence>& inputs) const;

private:
    ParaphraserConfig config_;
    Vocabulary vocab_;
};

// Sorted content-class ids of a sequence (the meaning-carrying multiset).
std::vector<int> content_classes(const TokenSequence& w, const Vocabulary& vocab);

// One pair per corpus text, in corpus order.
std::vector<PairExample> build_pairs(const Corpus& corpus, const Paraphraser& paraphraser);

// First line is a header record; then one {"original","paraphrase","meta"} per pair.
void write_pairs(const std::filesystem::path& path, const std::vector<PairExample>& pairs, const Json& header);
std::vector<PairExample> read_pairs(const std::filesystem::path& path, Json* header = nullptr);

}  // namespace paradiff
