#include "paradiff/errors.hpp"
#include "paradiff/training.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace paradiff;
using namespace paradiff::testing;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig c;
    c.model.vocab_size = 16;
    c.model.dim = 16;
    c.model.max_len = 6;
    c.model.layers = 1;
    c.model.heads = 2;
    c.model.hidden = 32;
    c.model.steps = 20;
    c.batch_size = 8;
    c.learning_rate = 5e-3;
    c.steps = 60;
    c.eval_every = 20;
    c.validation_examples = 16;
    c.seed = 9;
    return c;
}

// Copy task: the original is the paraphrase itself.
std::vector<PairExample> copy_pairs(int n, int vocab, int max_tokens, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PairExample> out;
    for (int i = 0; i < n; ++i) {
        TokenSequence w;
        const int len = rng.uniform_int(2, max_tokens);
        for (int k = 0; k < len; ++k) w.ids.push_back(rng.uniform_int(kReservedCount, vocab - 1));
        out.push_back({w, w, Json::object()});
    }
    return out;
}

TEST(MakeTarget, AppendsEosAndMasksPads) {
    const auto t = make_target(TokenSequence{{7, 8}}, 5);
    EXPECT_EQ(t.ids, (std::vector<int>{7, 8, kEosId, kPadId, kPadId}));
    EXPECT_EQ(t.mask, (std::vector<double>{1, 1, 1, 0, 0}));
    EXPECT_THROW(make_target(TokenSequence{{7, 8, 9, 10, 11}}, 5), ContractError);
}

TEST(MaskedCrossEntropy, MatchesIndependentFormula) {
    Rng rng(1);
    const Matrix logits = random_matrix(4, 6, rng, 2.0);
    const std::vector<int> targets{0, 5, 2, 3};
    const std::vector<double> mask{1, 1, 0, 1};
    double expected = 0.0;
    for (int r = 0; r < 4; ++r) {
        if (mask[r] == 0.0) continue;
        double z = 0.0;
        for (int c = 0; c < 6; ++c) z += std::exp(logits(r, c));
        expected += std::log(z) - logits(r, targets[r]);
    }
    ad::Tape tape;
    EXPECT_NEAR(masked_cross_entropy(tape.constant(logits), targets, mask).scalar(), expected, 1e-12);
}

TEST(MaskedCrossEntropy, MaskedRowsDoNotMatter) {
    Rng rng(2);
    Matrix logits = random_matrix(5, 8, rng);
    const std::vector<int> targets{1, 2, 3, 0, 0};
    const std::vector<double> mask{1, 1, 1, 0, 0};
    ad::Tape tape;
    const double a = masked_cross_entropy(tape.constant(logits), targets, mask).scalar();
    logits.bottomRows(2) = random_matrix(2, 8, rng, 100.0);
    const double b = masked_cross_entropy(tape.constant(logits), targets, mask).scalar();
    EXPECT_NEAR(a, b, 1e-12);
}

TEST(MaskedCrossEntropy, ConfidentCorrectLogitsGiveNearZeroLoss) {
    const std::vector<int> targets{3, 1, 0};
    const std::vector<double> mask{1, 1, 1};
    Matrix logits = Matrix::Zero(3, 5);
    for (int r = 0; r < 3; ++r) logits(r, targets[r]) = 50.0;
    ad::Tape tape;
    EXPECT_LT(masked_cross_entropy(tape.constant(logits), targets, mask).scalar(), 1e-20);
}

TEST(BatchLoss, ZeroHeadGivesLogV) {
    const auto c = tiny_train_config();
    Rng init(1), e(2);
    Denoiser model(c.model, init);
    model.zero_output_head();
    const auto E = EmbeddingTable::unit_rows(c.model.vocab_size, c.model.dim, e);
    const NoiseSchedule s(c.schedule, c.model.steps);
    const auto pairs = copy_pairs(3, c.model.vocab_size, 5, 3);
    const std::vector<const PairExample*> batch{&pairs[0], &pairs[1], &pairs[2]};
    const std::vector<int> ts{1, 10, 20};
    Rng rng(4);
    EXPECT_NEAR(batch_loss(model, E, s, batch, ts, rng), std::log(16.0), 1e-12);
}

TEST(BatchLoss, IsMeanOverTargetPositions) {
    const auto c = tiny_train_config();
    Rng init(1), e(2);
    const Denoiser model(c.model, init);
    const auto E = EmbeddingTable::unit_rows(c.model.vocab_size, c.model.dim, e);
    const NoiseSchedule s(c.schedule, c.model.steps);
    std::vector<PairExample> pairs{{TokenSequence{{5}}, TokenSequence{{5}}, {}},
                                   {TokenSequence{{6, 7, 8, 9}}, TokenSequence{{6}}, {}}};
    const std::vector<const PairExample*> one{&pairs[0]}, two{&pairs[1]}, both{&pairs[0], &pairs[1]};
    const std::vector<int> t1{4}, t2{4}, t12{4, 4};
    Rng r1(5), r2(6), r12(5);
    const double a = batch_loss(model, E, s, one, t1, r1);
    const double b = batch_loss(model, E, s, two, t2, r2);
    // Noise for the second example comes from the shared stream, so recompute it.
    Rng replay(5);
    batch_loss(model, E, s, one, t1, replay);
    const double b_shared = batch_loss(model, E, s, two, t2, replay);
    const double ab = batch_loss(model, E, s, both, t12, r12);
    EXPECT_NEAR(ab, (2.0 * a + 5.0 * b_shared) / 7.0, 1e-12);
    EXPECT_TRUE(std::isfinite(b));
}

TEST(BatchLoss, Contracts) {
    const auto c = tiny_train_config();
    Rng init(1), e(2);
    const Denoiser model(c.model, init);
    const auto E = EmbeddingTable::unit_rows(c.model.vocab_size, c.model.dim, e);
    const NoiseSchedule s(c.schedule, c.model.steps);
    const auto pairs = copy_pairs(1, 16, 3, 1);
    const std::vector<const PairExample*> batch{&pairs[0]};
    const std::vector<int> none, two{1, 2};
    Rng rng(1);
    EXPECT_THROW(batch_loss(model, E, s, batch, two, rng), ContractError);
    EXPECT_THROW(batch_loss(model, E, s, {}, none, rng), ContractError);
    std::vector<PairExample> empty{{TokenSequence{}, TokenSequence{{4}}, {}}};
    const std::vector<const PairExample*> eb{&empty[0]};
    const std::vector<int> t{1};
    EXPECT_THROW(batch_loss(model, E, s, eb, t, rng), ContractError);
}

TEST(SplitPairs, UsesMetadataAndDropsHoldout) {
    std::vector<PairExample> pairs;
    auto add = [&](const char* split, bool holdout) {
        pairs.push_back({TokenSequence{{4}}, TokenSequence{{4}}, Json{{"split", split}, {"holdout", holdout}}});
    };
    add("train", false);
    add("train", false);
    add("val", false);
    add("test", false);
    add("train", true);
    add("val", true);
    const auto s = split_pairs(pairs, 0.1, 1);
    EXPECT_EQ(s.train.size(), 2u);
    EXPECT_EQ(s.validation.size(), 1u);
    for (const auto& p : s.train) EXPECT_FALSE(p.meta.at("holdout").get<bool>());
    for (const auto& p : s.validation) EXPECT_FALSE(p.meta.at("holdout").get<bool>());
}

TEST(SplitPairs, CarvesFractionWhenUnlabeled) {
    const auto pairs = copy_pairs(25, 16, 4, 2);
    const auto s = split_pairs(pairs, 0.1, 3);
    EXPECT_EQ(s.validation.size(), 3u);
    EXPECT_EQ(s.train.size(), 22u);
    const auto again = split_pairs(pairs, 0.1, 3);
    for (std::size_t i = 0; i < s.validation.size(); ++i) {
        EXPECT_EQ(s.validation[i].original, again.validation[i].original);
    }
}

TEST(TrainConfigJson, RoundTripAndStrictness) {
    auto c = tiny_train_config();
    c.schedule = ScheduleKind::sqrt;
    const auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(back.model, c.model);
    EXPECT_EQ(back.schedule, ScheduleKind::sqrt);
    EXPECT_EQ(back.steps, c.steps);
    EXPECT_EQ(back.seed, c.seed);
    try {
        train_config_from_json(Json{{"stepz", 3}});
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stepz"), std::string::npos);
    }
    EXPECT_THROW(train_config_from_json(Json{{"model", {{"dimm", 3}}}}), ConfigError);
    EXPECT_THROW(train_config_from_json(Json{{"steps", "many"}}), ConfigError);
    EXPECT_THROW(train_config_from_json(Json{{"schedule", "linear"}}), ConfigError);
}

TEST(TrainConfig, Validation) {
    auto c = tiny_train_config();
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_train_config();
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_train_config();
    c.validation_fraction = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroStepsKeepsInitialization) {
    auto c = tiny_train_config();
    c.steps = 0;
    const auto pairs = copy_pairs(20, 16, 4, 5);
    const auto a = train(c, pairs, pairs);
    const auto b = train(c, pairs, pairs);
    EXPECT_EQ(a.best.step, 0);
    ASSERT_EQ(a.curve.size(), 1u);
    EXPECT_EQ(a.best.validation_loss, *a.curve[0].val_loss);
    EXPECT_TRUE(a.best.model.params() == b.best.model.params());
    EXPECT_EQ(a.best.embeddings.matrix(), b.best.embeddings.matrix());
}

TEST(Train, SameSeedSameCheckpointBytes) {
    TempDir dir;
    auto c = tiny_train_config();
    c.steps = 10;
    c.eval_every = 5;
    const auto pairs = copy_pairs(30, 16, 4, 6);
    save_denoiser_checkpoint(dir / "a.pdck", train(c, pairs, pairs).best);
    save_denoiser_checkpoint(dir / "b.pdck", train(c, pairs, pairs).best);
    EXPECT_EQ(read_bytes(dir / "a.pdck"), read_bytes(dir / "b.pdck"));
    c.seed = 10;
    save_denoiser_checkpoint(dir / "c.pdck", train(c, pairs, pairs).best);
    EXPECT_NE(read_bytes(dir / "a.pdck"), read_bytes(dir / "c.pdck"));
}

TEST(Train, ValidationLossDecreasesAndBestIsSelected) {
    const auto c = tiny_train_config();
    const auto train_pairs = copy_pairs(200, 16, 4, 7);
    const auto val_pairs = copy_pairs(16, 16, 4, 8);
    int callbacks = 0;
    auto cfg = c;
    cfg.checkpoint_every = 30;
    const auto r = train(cfg, train_pairs, val_pairs, [&](const DenoiserCheckpoint& ck) {
        ++callbacks;
        EXPECT_EQ(ck.step % 30, 0);
    });
    EXPECT_EQ(callbacks, 2);
    ASSERT_EQ(r.curve.size(), static_cast<std::size_t>(c.steps + 1));
    double min_val = std::numeric_limits<double>::infinity();
    long min_step = -1;
    for (const auto& rec : r.curve) {
        if (rec.val_loss && *rec.val_loss < min_val) {
            min_val = *rec.val_loss;
            min_step = rec.step;
        }
    }
    EXPECT_EQ(r.best.validation_loss, min_val);
    EXPECT_EQ(r.best.step, min_step);
    EXPECT_LT(*r.curve.back().val_loss, *r.curve.front().val_loss - 0.3);
    for (std::size_t i = 1; i < r.curve.size(); ++i) EXPECT_TRUE(std::isfinite(r.curve[i].train_loss));
}

TEST(Train, RequiresData) {
    const auto c = tiny_train_config();
    const auto pairs = copy_pairs(3, 16, 3, 1);
    EXPECT_THROW(train(c, {}, pairs), ContractError);
    EXPECT_THROW(train(c, pairs, {}), ContractError);
}

TEST(LossCurve, OneJsonLinePerRecord) {
    TempDir dir;
    write_loss_curve(dir / "c.jsonl", {{0, std::nan(""), 2.0}, {1, 1.5, std::nullopt}});
    const auto lines = read_jsonl(dir / "c.jsonl");
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_TRUE(lines[0].at("train_loss").is_null());
    EXPECT_EQ(lines[0].at("val_loss"), 2.0);
    EXPECT_TRUE(lines[1].at("val_loss").is_null());
}

}  // namespace
