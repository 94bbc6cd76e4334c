#pragma once

#include "paradiff/json_io.hpp"
#include "paradiff/rng.hpp"
#include "paradiff/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace paradiff {

// Synthetic style corpus. Content tokens follow a small clause grammar
// (content classes are split into ordered role groups; a clause takes one
// class from each of the first three groups and optionally the fourth).
// Every text carries 1..2 markers of its attribute's style. Authors differ
// by attribute lean, favourite markers and preferred synonyms.
struct CorpusSpec {
    int content_classes = 8;
    int synonyms = 5;
    int grammar_groups = 4;
    int styles = 2;  // attribute classes
    int markers_per_style = 10;
    int authors = 40;
    int texts_per_author = 160;
    int max_len = 16;  // model length, including </s>
    int max_clauses = 2;
    int min_markers = 1;
    int max_markers = 2;
    int favorite_markers = 3;
    double favorite_weight = 6.0;
    double synonym_loyalty = 0.85;
    // Markers go only after the last clause instead of at clause starts or
    // the end.
    bool markers_at_end = true;
    // 0 derives the vocabulary size from the blocks; otherwise it must match.
    int vocab_size = 0;
    // Preprocessing
    int min_texts_per_author = 10;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1;

    void validate() const;
    Vocabulary vocabulary() const;
    int longest_text() const;
    friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

Json to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const Json& j, const std::string& context = "corpus");

enum class Split { train, val, test };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct LabeledText {
    TokenSequence tokens;  // without </s>
    int attribute = 0;
    int author = 0;
    Split split = Split::train;
    bool holdout = false;
    friend bool operator==(const LabeledText&, const LabeledText&) = default;
};

struct RawText {
    TokenSequence tokens;
    int attribute = 0;
    int author = 0;
};

struct PreprocessRules {
    int max_tokens = 15;
    int min_texts_per_author = 10;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct Corpus {
    std::vector<LabeledText> texts;

    std::vector<const LabeledText*> select(Split split, bool holdout) const;
};

// Raw author-labelled texts from the generator, before preprocessing.
std::vector<RawText> generate_raw(const CorpusSpec& spec);

// generate_raw followed by preprocess with the spec's rules.
Corpus generate(const CorpusSpec& spec);

// Dedupe, length filter, minimum-texts-per-author filter, holdout-author
// selection, then seeded splits: non-holdout texts 0.8/0.1/0.1 (floor train,
// floor val, remainder test); each holdout author's texts 0.6/0.2/0.2.
Corpus preprocess(std::vector<RawText> raw, const PreprocessRules& rules);

// Ground-truth attribute from marker majority (ties and no markers: -1).
int rule_attribute(const TokenSequence& tokens, const Vocabulary& vocab);

Json to_json(const LabeledText& text);
LabeledText labeled_text_from_json(const Json& j);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);

// Fisher-Yates with the project's Rng (portable across standard libraries).
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace paradiff
