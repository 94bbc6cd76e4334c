#include "paradiff/corpus.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace paradiff {

void CorpusSpec::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("corpus spec: " + what); };
    if (content_classes < 1 || synonyms < 1 || styles < 1 || markers_per_style < 1) fail("vocabulary blocks must be positive");
    if (styles < 2) fail("at least two styles are required");
    if (grammar_groups < 1 || content_classes % grammar_groups != 0) {
        fail("grammar_groups must divide content_classes");
    }
    if (grammar_groups < 3) fail("grammar needs at least 3 role groups");
    if (authors < 1) fail("authors must be >= 1");
    if (texts_per_author < 0) fail("texts_per_author must be >= 0");
    if (max_clauses < 1) fail("max_clauses must be >= 1");
    if (min_markers < 1 || max_markers < min_markers) fail("marker counts must satisfy 1 <= min <= max");
    if (favorite_markers < 1 || favorite_markers > markers_per_style) fail("favorite_markers out of range");
    if (favorite_weight < 1.0) fail("favorite_weight must be >= 1");
    if (synonym_loyalty < 0.0 || synonym_loyalty > 1.0) fail("synonym_loyalty must be in [0, 1]");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) fail("holdout_fraction must be in [0, 1)");
    if (min_texts_per_author < 1) fail("min_texts_per_author must be >= 1");
    const int derived = kReservedCount + content_classes * synonyms + styles * markers_per_style;
    if (vocab_size != 0 && vocab_size != derived) {
        fail("vocab_size " + std::to_string(vocab_size) + " overlaps or leaves gaps between token blocks (blocks need " +
             std::to_string(derived) + ")");
    }
    if (longest_text() + 1 > max_len) fail("max_len too small for the longest generated text plus </s>");
}

Vocabulary CorpusSpec::vocabulary() const { return Vocabulary(content_classes, synonyms, styles, markers_per_style); }

int CorpusSpec::longest_text() const {
    const int clause = grammar_groups;  // all groups present
    return max_clauses * clause + (max_clauses - 1) + max_markers;
}

Json to_json(const CorpusSpec& s) {
    return Json{{"content_classes", s.content_classes},
                {"synonyms", s.synonyms},
                {"grammar_groups", s.grammar_groups},
                {"styles", s.styles},
                {"markers_per_style", s.markers_per_style},
                {"authors", s.authors},
                {"texts_per_author", s.texts_per_author},
                {"max_len", s.max_len},
                {"max_clauses", s.max_clauses},
                {"min_markers", s.min_markers},
                {"max_markers", s.max_markers},
                {"favorite_markers", s.favorite_markers},
                {"favorite_weight", s.favorite_weight},
                {"synonym_loyalty", s.synonym_loyalty},
                {"markers_at_end", s.markers_at_end},
                {"vocab_size", s.vocab_size},
                {"min_texts_per_author", s.min_texts_per_author},
                {"holdout_fraction", s.holdout_fraction},
                {"seed", s.seed}};
}

CorpusSpec corpus_spec_from_json(const Json& j, const std::string& context) {
    CorpusSpec s;
    StrictReader r(j, context);
    r.get("content_classes", s.content_classes)
        .get("synonyms", s.synonyms)
        .get("grammar_groups", s.grammar_groups)
        .get("styles", s.styles)
        .get("markers_per_style", s.markers_per_style)
        .get("authors", s.authors)
        .get("texts_per_author", s.texts_per_author)
        .get("max_len", s.max_len)
        .get("max_clauses", s.max_clauses)
        .get("min_markers", s.min_markers)
        .get("max_markers", s.max_markers)
        .get("favorite_markers", s.favorite_markers)
        .get("favorite_weight", s.favorite_weight)
        .get("synonym_loyalty", s.synonym_loyalty)
        .get("markers_at_end", s.markers_at_end)
        .get("vocab_size", s.vocab_size)
        .get("min_texts_per_author", s.min_texts_per_author)
        .get("holdout_fraction", s.holdout_fraction)
        .get("seed", s.seed);
    r.finish();
    return s;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ContractError("unknown split: " + std::string(s));
}

std::vector<const LabeledText*> Corpus::select(Split split, bool holdout) const {
    std::vector<const LabeledText*> out;
    for (const auto& t : texts) {
        if (t.split == split && t.holdout == holdout) out.push_back(&t);
    }
    return out;
}

namespace {

struct AuthorProfile {
    double lean = 0.5;  // probability of writing style 0 when styles == 2
    std::vector<std::vector<double>> marker_weights;  // [style][marker]
    std::vector<int> preferred_synonym;               // [class]
};

int sample_weighted(const std::vector<double>& w, Rng& rng) {
    double total = 0.0;
    for (double x : w) total += x;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
        u -= w[i];
        if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(w.size()) - 1;
}

AuthorProfile make_profile(const CorpusSpec& spec, Rng& rng) {
    AuthorProfile p;
    p.lean = 0.2 + 0.6 * rng.uniform();
    for (int s = 0; s < spec.styles; ++s) {
        std::vector<int> order(static_cast<std::size_t>(spec.markers_per_style));
        for (int i = 0; i < spec.markers_per_style; ++i) order[static_cast<std::size_t>(i)] = i;
        shuffle_in_place(order, rng);
        std::vector<double> w(static_cast<std::size_t>(spec.markers_per_style), 1.0);
        for (int i = 0; i < spec.favorite_markers; ++i) w[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = spec.favorite_weight;
        p.marker_weights.push_back(std::move(w));
    }
    for (int c = 0; c < spec.content_classes; ++c) p.preferred_synonym.push_back(rng.uniform_int(0, spec.synonyms - 1));
    return p;
}

int pick_attribute(const CorpusSpec& spec, const AuthorProfile& p, Rng& rng) {
    if (spec.styles == 2) return rng.bernoulli(p.lean) ? 0 : 1;
    return rng.uniform_int(0, spec.styles - 1);
}

TokenSequence make_text(const CorpusSpec& spec, const Vocabulary& vocab, const AuthorProfile& p, int attribute,
                        Rng& rng) {
    const int per_group = spec.content_classes / spec.grammar_groups;
    const int clauses = rng.uniform_int(1, spec.max_clauses);
    std::vector<std::vector<int>> parts;
    for (int c = 0; c < clauses; ++c) {
        std::vector<int> clause;
        const int groups = spec.grammar_groups - (rng.bernoulli(0.5) ? 1 : 0);
        for (int g = 0; g < groups; ++g) {
            const int cls = g * per_group + rng.uniform_int(0, per_group - 1);
            int syn = p.preferred_synonym[static_cast<std::size_t>(cls)];
            if (spec.synonyms > 1 && !rng.bernoulli(spec.synonym_loyalty)) {
                syn = (syn + rng.uniform_int(1, spec.synonyms - 1)) % spec.synonyms;
            }
            clause.push_back(vocab.content_id(cls, syn));
        }
        parts.push_back(std::move(clause));
    }
    // Marker slots: the start of each clause, or the end of the text.
    const int markers = rng.uniform_int(spec.min_markers, spec.max_markers);
    std::vector<std::vector<int>> at_start(parts.size());
    std::vector<int> at_end;
    for (int m = 0; m < markers; ++m) {
        const int id = vocab.marker_id(attribute, sample_weighted(p.marker_weights[static_cast<std::size_t>(attribute)], rng));
        const int slot = spec.markers_at_end ? static_cast<int>(parts.size())
                                             : rng.uniform_int(0, static_cast<int>(parts.size()));
        if (slot == static_cast<int>(parts.size())) {
            at_end.push_back(id);
        } else {
            at_start[static_cast<std::size_t>(slot)].push_back(id);
        }
    }
    TokenSequence out;
    for (std::size_t c = 0; c < parts.size(); ++c) {
        if (c > 0) out.ids.push_back(kSepId);
        out.ids.insert(out.ids.end(), at_start[c].begin(), at_start[c].end());
        out.ids.insert(out.ids.end(), parts[c].begin(), parts[c].end());
    }
    out.ids.insert(out.ids.end(), at_end.begin(), at_end.end());
    return out;
}

}  // namespace

std::vector<RawText> generate_raw(const CorpusSpec& spec) {
    spec.validate();
    const Vocabulary vocab = spec.vocabulary();
    Rng rng(derive_seed(spec.seed, 0xC0));
    std::vector<AuthorProfile> profiles;
    for (int a = 0; a < spec.authors; ++a) profiles.push_back(make_profile(spec, rng));
    std::vector<RawText> out;
    out.reserve(static_cast<std::size_t>(spec.authors * spec.texts_per_author));
    for (int a = 0; a < spec.authors; ++a) {
        for (int i = 0; i < spec.texts_per_author; ++i) {
            const int attr = pick_attribute(spec, profiles[static_cast<std::size_t>(a)], rng);
            out.push_back({make_text(spec, vocab, profiles[static_cast<std::size_t>(a)], attr, rng), attr, a});
        }
    }
    return out;
}

Corpus generate(const CorpusSpec& spec) {
    auto raw = generate_raw(spec);
    if (raw.empty()) return {};
    return preprocess(std::move(raw),
                      {spec.max_len - 1, spec.min_texts_per_author, spec.holdout_fraction, derive_seed(spec.seed, 0xC1)});
}

Corpus preprocess(std::vector<RawText> raw, const PreprocessRules& rules) {
    // Exact duplicates (first occurrence wins) and over-long texts.
    std::set<std::vector<int>> seen;
    std::vector<RawText> kept;
    for (auto& r : raw) {
        if (static_cast<int>(r.tokens.size()) > rules.max_tokens) continue;
        if (!seen.insert(r.tokens.ids).second) continue;
        kept.push_back(std::move(r));
    }
    std::map<int, std::vector<std::size_t>> by_author;
    for (std::size_t i = 0; i < kept.size(); ++i) by_author[kept[i].author].push_back(i);
    std::vector<int> authors;
    for (const auto& [a, idx] : by_author) {
        if (static_cast<int>(idx.size()) >= rules.min_texts_per_author) authors.push_back(a);
    }
    if (authors.empty()) throw ContractError("preprocess: no texts survive filtering");

    Rng rng(rules.seed);
    shuffle_in_place(authors, rng);
    const auto n_holdout = static_cast<std::size_t>(std::lround(rules.holdout_fraction * static_cast<double>(authors.size())));
    std::set<int> holdout(authors.begin(), authors.begin() + static_cast<std::ptrdiff_t>(std::min(n_holdout, authors.size())));

    auto split_counts = [](std::size_t n, double train, double val) {
        const auto n_train = static_cast<std::size_t>(std::floor(train * static_cast<double>(n)));
        const auto n_val = static_cast<std::size_t>(std::floor(val * static_cast<double>(n)));
        return std::pair{n_train, n_val};
    };
    auto assign = [&](std::vector<std::size_t> idx, double train, double val, bool is_holdout, Corpus& out) {
        shuffle_in_place(idx, rng);
        const auto [n_train, n_val] = split_counts(idx.size(), train, val);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const RawText& r = kept[idx[k]];
            const Split s = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
            out.texts.push_back({r.tokens, r.attribute, r.author, s, is_holdout});
        }
    };

    // Keep the seeded order stable: authors sorted by id.
    std::sort(authors.begin(), authors.end());
    Corpus out;
    std::vector<std::size_t> regular;
    for (int a : authors) {
        if (!holdout.contains(a)) regular.insert(regular.end(), by_author[a].begin(), by_author[a].end());
    }
    std::sort(regular.begin(), regular.end());
    assign(regular, 0.8, 0.1, false, out);
    for (int a : authors) {
        if (holdout.contains(a)) assign(by_author[a], 0.6, 0.2, true, out);
    }
    return out;
}

int rule_attribute(const TokenSequence& tokens, const Vocabulary& vocab) {
    std::vector<int> counts(static_cast<std::size_t>(vocab.styles()), 0);
    for (int id : tokens.ids) {
        if (const int s = vocab.marker_style(id); s >= 0) ++counts[static_cast<std::size_t>(s)];
    }
    const auto best = std::max_element(counts.begin(), counts.end());
    if (*best == 0 || std::count(counts.begin(), counts.end(), *best) > 1) return -1;
    return static_cast<int>(best - counts.begin());
}

Json to_json(const LabeledText& t) {
    return Json{{"tokens", t.tokens.ids},
                {"attribute", t.attribute},
                {"author", t.author},
                {"split", std::string(to_string(t.split))},
                {"holdout", t.holdout}};
}

LabeledText labeled_text_from_json(const Json& j) {
    LabeledText t;
    j.at("tokens").get_to(t.tokens.ids);
    j.at("attribute").get_to(t.attribute);
    j.at("author").get_to(t.author);
    t.split = parse_split(j.at("split").get<std::string>());
    j.at("holdout").get_to(t.holdout);
    return t;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::vector<Json> records;
    records.reserve(corpus.texts.size());
    for (const auto& t : corpus.texts) records.push_back(to_json(t));
    write_jsonl(path, records);
}

Corpus read_corpus(const std::filesystem::path& path) {
    Corpus c;
    for (const auto& j : read_jsonl(path)) c.texts.push_back(labeled_text_from_json(j));
    return c;
}

}  // namespace paradiff
