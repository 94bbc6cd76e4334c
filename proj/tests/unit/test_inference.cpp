#include "paradiff/errors.hpp"
#include "paradiff/guidance_models.hpp"
#include "paradiff/inference.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace paradiff;
using namespace paradiff::testing;

namespace {

// 4 reserved + 2x2 content + 2x4 markers = 16 tokens.
const Vocabulary kVocab(2, 2, 2, 4);

class FixedUniformRng : public Rng {
public:
    explicit FixedUniformRng(double u) : u_(u) {}
    double uniform() override { return u_; }

private:
    double u_;
};

DenoiserCheckpoint tiny_checkpoint() {
    DenoiserConfig c;
    c.vocab_size = kVocab.size();
    c.dim = 8;
    c.max_len = 6;
    c.layers = 1;
    c.heads = 2;
    c.hidden = 16;
    c.steps = 8;
    Rng init(1), e(2);
    return {Denoiser(c, init), EmbeddingTable::unit_rows(c.vocab_size, c.dim, e), ScheduleKind::paraguide, 0, 0.0, {}};
}

TransferConfig tiny_transfer() {
    TransferConfig c;
    c.steps = 8;
    c.top_p = 0.9;
    return c;
}

const ToyAttributeClassifier& classifier() {
    static const ToyAttributeClassifier m = [] {
        ToyModelConfig c;
        c.vocab_size = kVocab.size();
        c.max_len = 6;
        c.dim = 8;
        c.hidden = 16;
        c.outputs = 2;
        Rng rng(3);
        return ToyAttributeClassifier(c, rng);
    }();
    return m;
}

const TokenSequence kSource{{kVocab.content_id(0, 0), kVocab.content_id(1, 1), kVocab.marker_id(0, 2)}};
const TokenSequence kParaphrase{{kVocab.content_id(1, 0), kVocab.content_id(0, 0)}};

Vector probs_of(std::initializer_list<double> v) {
    Vector p(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) p(i++) = x;
    return p;
}

TEST(TopP, NucleusExample) {
    // {0.5, 0.3, 0.2} at p = 0.8 keeps {0, 1}, renormalized to {0.625, 0.375}.
    const Vector p = probs_of({0.2, 0.5, 0.3});
    FixedUniformRng low(0.6), high(0.7), top(0.999999);
    EXPECT_EQ(top_p_sample(p, 0.8, low), 1);   // 0.6 * 0.8 = 0.48 < 0.5
    EXPECT_EQ(top_p_sample(p, 0.8, high), 2);  // 0.56 >= 0.5
    EXPECT_EQ(top_p_sample(p, 0.8, top), 2);   // never reaches the excluded token
    Rng rng(1);
    int first = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) first += top_p_sample(p, 0.8, rng) == 1 ? 1 : 0;
    const double se = std::sqrt(0.625 * 0.375 / n);
    EXPECT_LT(std::abs(first / static_cast<double>(n) - 0.625), 4.0 * se);
}

TEST(TopP, SmallPKeepsOnlyTheMode) {
    const Vector p = probs_of({0.3, 0.45, 0.25});
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(top_p_sample(p, 0.1, rng), 1);
}

TEST(TopP, OneHotAlwaysReturnsItsToken) {
    Vector p = Vector::Zero(10);
    p(7) = 1.0;
    Rng rng(3);
    for (double q : {1e-6, 0.5, 1.0}) {
        for (int i = 0; i < 200; ++i) ASSERT_EQ(top_p_sample(p, q, rng), 7);
    }
}

TEST(TopP, FullNucleusMatchesDistribution) {
    const Vector p = probs_of({0.1, 0.4, 0.05, 0.25, 0.2});
    Rng rng(4);
    const int n = 100000;
    std::vector<int> counts(5, 0);
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(top_p_sample(p, 1.0, rng))];
    for (int k = 0; k < 5; ++k) {
        const double se = std::sqrt(p(k) * (1.0 - p(k)) / n);
        EXPECT_LT(std::abs(counts[static_cast<std::size_t>(k)] / static_cast<double>(n) - p(k)), 4.0 * se) << k;
    }
}

TEST(TopP, TiesKeepIdOrder) {
    const Vector p = probs_of({0.25, 0.25, 0.25, 0.25});
    FixedUniformRng u(0.0);
    EXPECT_EQ(top_p_sample(p, 0.5, u), 0);
    FixedUniformRng v(0.99);
    EXPECT_EQ(top_p_sample(p, 0.5, v), 1);
}

TEST(TopP, RejectsNonPositiveP) {
    Rng rng(5);
    const Vector p = probs_of({0.5, 0.5});
    EXPECT_THROW(top_p_sample(p, 0.0, rng), DomainError);
    EXPECT_THROW(top_p_sample(p, -0.1, rng), DomainError);
    EXPECT_THROW(top_p_sample(Vector(), 0.5, rng), ContractError);
}

TEST(Canonicalize, PadsAfterFirstTerminator) {
    std::vector<int> a{5, 6, kEosId, 7, kEosId, 8};
    canonicalize_sample(a);
    EXPECT_EQ(a, (std::vector<int>{5, 6, kEosId, kPadId, kPadId, kPadId}));
    std::vector<int> b{5, kPadId, 7};
    canonicalize_sample(b);
    EXPECT_EQ(b, (std::vector<int>{5, kPadId, kPadId}));
    std::vector<int> c{5, 6, 7};
    canonicalize_sample(c);
    EXPECT_EQ(c, (std::vector<int>{5, 6, 7}));
}

TEST(Transfer, DeterministicAndBounded) {
    const auto ckpt = tiny_checkpoint();
    const auto cfg = tiny_transfer();
    for (long item = 0; item < 10; ++item) {
        const auto a = transfer_paraphrase(kSource, kParaphrase, item, cfg, ckpt, nullptr);
        const auto b = transfer_paraphrase(kSource, kParaphrase, item, cfg, ckpt, nullptr);
        EXPECT_EQ(a.output, b.output);
        EXPECT_EQ(a.retries, b.retries);
        EXPECT_LE(a.output.size(), 6u);
        for (int id : a.output.ids) {
            EXPECT_NE(id, kPadId);
            EXPECT_NE(id, kEosId);
        }
        EXPECT_EQ(a.item, item);
        EXPECT_EQ(a.seed, cfg.seed);
    }
    auto other = cfg;
    other.seed = 12;
    int differ = 0;
    for (long item = 0; item < 10; ++item) {
        differ += transfer_paraphrase(kSource, kParaphrase, item, cfg, ckpt, nullptr).output !=
                  transfer_paraphrase(kSource, kParaphrase, item, other, ckpt, nullptr).output;
    }
    EXPECT_GT(differ, 0);
}

TEST(Transfer, LambdaZeroIsBitwiseUnguided) {
    const auto ckpt = tiny_checkpoint();
    auto unguided = tiny_transfer();
    auto attribute = unguided;
    attribute.guidance.mode = GuidanceMode::attribute;
    attribute.guidance.target_class = 1;
    const AttributeObjective obj(classifier(), 1, 3.0);
    for (long item = 0; item < 10; ++item) {
        const auto a = transfer_paraphrase(kSource, kParaphrase, item, unguided, ckpt, nullptr);
        const auto b = transfer_paraphrase(kSource, kParaphrase, item, attribute, ckpt, &obj);
        EXPECT_EQ(a.output, b.output);
        EXPECT_EQ(b.guidance.steps, 0);
    }
    attribute.guidance.lambda = 1e3;
    int differ = 0;
    for (long item = 0; item < 10; ++item) {
        const auto a = transfer_paraphrase(kSource, kParaphrase, item, unguided, ckpt, nullptr);
        const auto b = transfer_paraphrase(kSource, kParaphrase, item, attribute, ckpt, &obj);
        differ += a.output != b.output;
        EXPECT_EQ(b.guidance.steps, static_cast<long>(b.retries + 1) * (attribute.steps - 1));
    }
    EXPECT_GT(differ, 0);
}

TEST(Transfer, EmptySamplesAreRetriedOnce) {
    const auto ckpt = tiny_checkpoint();
    auto cfg = tiny_transfer();
    cfg.max_retries = 1;
    long passes = 0;
    TransferHooks hooks{[](const Vector&, double, Rng&) { return kEosId; }, &passes};
    const auto rec = transfer_paraphrase(kSource, kParaphrase, 3, cfg, ckpt, nullptr, hooks);
    EXPECT_EQ(passes, 2);
    EXPECT_TRUE(rec.empty_output);
    EXPECT_TRUE(rec.output.empty());
    EXPECT_EQ(rec.retries, 1);
    EXPECT_EQ(to_json(rec, kVocab).at("error"), "empty_output");
}

TEST(Transfer, RetrySucceedsOnSecondAttempt) {
    const auto ckpt = tiny_checkpoint();
    auto cfg = tiny_transfer();
    cfg.max_retries = 3;
    long passes = 0;
    TransferHooks hooks{[&](const Vector&, double, Rng&) { return passes == 1 ? kEosId : 5; }, &passes};
    const auto rec = transfer_paraphrase(kSource, kParaphrase, 3, cfg, ckpt, nullptr, hooks);
    EXPECT_EQ(passes, 2);
    EXPECT_FALSE(rec.empty_output);
    EXPECT_EQ(rec.retries, 1);
    EXPECT_EQ(rec.output, TokenSequence{std::vector<int>(6, 5)});
}

TEST(Transfer, Contracts) {
    const auto ckpt = tiny_checkpoint();
    auto cfg = tiny_transfer();
    cfg.steps = 9;
    EXPECT_THROW(transfer_paraphrase(kSource, kParaphrase, 0, cfg, ckpt, nullptr), ContractError);
    cfg = tiny_transfer();
    cfg.schedule = ScheduleKind::cosine;
    EXPECT_THROW(transfer_paraphrase(kSource, kParaphrase, 0, cfg, ckpt, nullptr), ContractError);
    cfg = tiny_transfer();
    cfg.guidance.mode = GuidanceMode::attribute;
    cfg.guidance.lambda = 1.0;
    EXPECT_THROW(transfer_paraphrase(kSource, kParaphrase, 0, cfg, ckpt, nullptr), ContractError);
    cfg = tiny_transfer();
    cfg.top_p = 0.0;
    EXPECT_THROW(transfer_paraphrase(kSource, kParaphrase, 0, cfg, ckpt, nullptr), ConfigError);
    EXPECT_THROW(transfer_paraphrase(kSource, TokenSequence{std::vector<int>(7, 5)}, 0, tiny_transfer(), ckpt, nullptr),
                 ContractError);
}

TEST(Transfer, ParaphrasesWithPerItemStream) {
    const auto ckpt = tiny_checkpoint();
    const Paraphraser para({}, kVocab);
    const auto rec = transfer(kSource, 4, tiny_transfer(), ckpt, para, nullptr);
    Rng rng(derive_seed(para.config().seed, 4));
    EXPECT_EQ(rec.paraphrase, para.paraphrase(kSource, rng));
    EXPECT_EQ(rec.source, kSource);
}

TEST(TransferBatch, MatchesPerItemCalls) {
    const auto ckpt = tiny_checkpoint();
    const Paraphraser para({}, kVocab);
    auto cfg = tiny_transfer();
    cfg.guidance.mode = GuidanceMode::attribute;
    cfg.guidance.lambda = 5.0;
    std::vector<TransferRequest> reqs;
    for (int i = 0; i < 4; ++i) {
        TransferRequest r;
        r.source = kSource;
        r.target_class = i % 2;
        r.direction = i % 2 ? "to_1" : "to_0";
        reqs.push_back(r);
    }
    const auto batch = transfer_batch(reqs, cfg, ckpt, para, {&classifier(), nullptr});
    ASSERT_EQ(batch.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        const AttributeObjective obj(classifier(), reqs[i].target_class, cfg.guidance.tau);
        const auto single = transfer(kSource, static_cast<long>(i), cfg, ckpt, para, &obj);
        EXPECT_EQ(batch[i].output, single.output);
        EXPECT_EQ(batch[i].direction, reqs[i].direction);
        EXPECT_EQ(batch[i].item, static_cast<long>(i));
    }
    EXPECT_THROW(transfer_batch(reqs, cfg, ckpt, para, {}), DependencyError);
    cfg.guidance.lambda = 0.0;
    EXPECT_NO_THROW(transfer_batch(reqs, cfg, ckpt, para, {}));
}

TEST(MakeObjective, NeedsTheRightModel) {
    GuidanceSpec spec;
    EXPECT_EQ(make_objective(spec, {}), nullptr);
    spec.mode = GuidanceMode::attribute;
    EXPECT_THROW(make_objective(spec, {}), DependencyError);
    EXPECT_NE(make_objective(spec, {&classifier(), nullptr}), nullptr);
    spec.mode = GuidanceMode::style;
    spec.exemplars = {kSource};
    EXPECT_THROW(make_objective(spec, {&classifier(), nullptr}), DependencyError);
}

TEST(TransferRecords, JsonlRoundTrip) {
    TempDir dir;
    const auto ckpt = tiny_checkpoint();
    std::vector<TransferRecord> recs;
    for (long i = 0; i < 5; ++i) {
        auto r = transfer_paraphrase(kSource, kParaphrase, i, tiny_transfer(), ckpt, nullptr);
        r.direction = "to_1";
        recs.push_back(r);
    }
    recs[2].empty_output = true;
    recs[2].output = {};
    write_transfers(dir / "t.jsonl", recs, kVocab);
    const auto back = read_transfers(dir / "t.jsonl", kVocab);
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].item, recs[i].item);
        EXPECT_EQ(back[i].source, recs[i].source);
        EXPECT_EQ(back[i].paraphrase, recs[i].paraphrase);
        EXPECT_EQ(back[i].output, recs[i].output);
        EXPECT_EQ(back[i].empty_output, recs[i].empty_output);
        EXPECT_EQ(back[i].direction, "to_1");
        EXPECT_EQ(back[i].mode, recs[i].mode);
    }
    EXPECT_EQ(read_jsonl(dir / "t.jsonl")[0].at("source"), kVocab.decode(kSource.ids));
}

TEST(TransferConfigJson, RoundTripAndStrictness) {
    auto c = tiny_transfer();
    c.guidance.mode = GuidanceMode::style;
    c.guidance.lambda = 10.0;
    c.guidance.rule = GradientRule::literal;
    c.renoise = RenoiseRule::literal_loop;
    c.mask_after_eos = false;
    const auto back = transfer_config_from_json(to_json(c));
    EXPECT_EQ(back.steps, 8);
    EXPECT_EQ(back.guidance.mode, GuidanceMode::style);
    EXPECT_EQ(back.guidance.lambda, 10.0);
    EXPECT_EQ(back.guidance.rule, GradientRule::literal);
    EXPECT_EQ(back.renoise, RenoiseRule::literal_loop);
    EXPECT_FALSE(back.mask_after_eos);
    EXPECT_THROW(transfer_config_from_json(Json{{"guidance", {{"lamda", 1}}}}), ConfigError);
    EXPECT_THROW(transfer_config_from_json(Json{{"top_p", 1.5}}), ConfigError);
    EXPECT_THROW(transfer_config_from_json(Json{{"renoise", "sometimes"}}), ConfigError);
}

}  // namespace
