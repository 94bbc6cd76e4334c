#include "paradiff/errors.hpp"
#include "paradiff/evaluation.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace paradiff;
using namespace paradiff::testing;

namespace {

// 4 reserved + 2x2 content + 2x4 markers = 16 tokens.
const Vocabulary kVocab(2, 2, 2, 4);

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

// Class 1 with probability 0.9 iff the text holds a style-1 marker.
class MarkerClassifier : public AttributeModel {
public:
    const Matrix& embedding_table() const override { return table_; }
    int num_classes() const override { return 2; }
    ad::Var class_log_probs(ad::Tape& tape, ad::Var emb, ad::Var) const override {
        // Rows of E are one-hot ids, so column sums count tokens.
        double style1 = 0.0;
        for (int m = 0; m < 4; ++m) style1 += emb.value().col(kVocab.marker_id(1, m)).sum();
        Matrix lp(1, 2);
        lp << std::log(style1 > 0 ? 0.1 : 0.9), std::log(style1 > 0 ? 0.9 : 0.1);
        return tape.constant(lp);
    }

private:
    Matrix table_ = Matrix::Identity(16, 16);
};

class ConstantFluency : public FluencyModel {
public:
    explicit ConstantFluency(double v) : v_(v) {}
    double score(const TokenSequence&) const override { return v_; }

private:
    double v_;
};

const TokenSequence kSource{{kVocab.content_id(0, 0), kVocab.content_id(1, 0), kVocab.marker_id(0, 0)}};
const TokenSequence kStyled{{kVocab.content_id(0, 1), kVocab.content_id(1, 0), kVocab.marker_id(1, 2)}};
const TokenSequence kPlain{{kVocab.content_id(0, 0)}};

TEST(Joint, Examples) {
    EXPECT_NEAR(joint(1.0, 0.5, 0.6), std::cbrt(0.3), 1e-12);
    EXPECT_NEAR(joint(1.0, 0.5, 0.6), 0.669432950082169, 1e-9);
    EXPECT_DOUBLE_EQ(joint(1.0, 1.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(joint(0.0, 0.7, 0.9), 0.0);
    EXPECT_NEAR(joint(0.125, 1.0, 1.0), 0.5, 1e-12);
    EXPECT_THROW(joint(1.1, 0.5, 0.5), ContractError);
    EXPECT_THROW(joint(0.5, -0.1, 0.5), ContractError);
    EXPECT_THROW(joint(0.5, 0.5, std::nan("")), ContractError);
}

TEST(Confusion, Examples) {
    const std::vector<Vector> source{vec({1, 0}), vec({0.9, 0.1})}, target{vec({0, 1}), vec({0.1, 0.9})};
    EXPECT_EQ(confusion(vec({0.2, 1.0}), source, target), 1);
    EXPECT_EQ(confusion(vec({1.0, 0.2}), source, target), 0);
    // Equidistant: not strictly closer to the target.
    EXPECT_EQ(confusion(vec({1.0, 1.0}), source, target), 0);
    // Scale does not matter.
    EXPECT_EQ(confusion(vec({20.0, 100.0}), source, target), 1);
    EXPECT_THROW(confusion(vec({0.0, 0.0}), source, target), DomainError);
    EXPECT_THROW(confusion(vec({1.0, 0.0}), {}, target), ContractError);
    EXPECT_THROW(confusion(vec({1.0, 0.0}), source, {}), ContractError);
    EXPECT_THROW(confusion(vec({1.0, 0.0}), {vec({1, 0}), vec({-1, 0})}, target), DomainError);
}

TEST(ContentF1, Examples) {
    const int a0 = kVocab.content_id(0, 0), a1 = kVocab.content_id(0, 1), b0 = kVocab.content_id(1, 0);
    const int m = kVocab.marker_id(1, 0);
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{{a0, b0}}, TokenSequence{{b0, a0}}, kVocab), 1.0);
    // Synonyms share a class; markers and separators are ignored.
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{{a1, m, kSepId, b0}}, TokenSequence{{a0, b0}}, kVocab), 1.0);
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{{a0, b0, b0}}, TokenSequence{{a0, b0}}, kVocab), 0.8);
    EXPECT_NEAR(content_f1(TokenSequence{{a0, a0, b0}}, TokenSequence{{a0, b0, b0}}, kVocab), 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{{a0}}, TokenSequence{{b0}}, kVocab), 0.0);
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{}, TokenSequence{{b0}}, kVocab), 0.0);
    EXPECT_DOUBLE_EQ(content_f1(TokenSequence{{m}}, TokenSequence{}, kVocab), 1.0);
    const ContentF1Similarity sim(kVocab);
    EXPECT_DOUBLE_EQ(sim.score(TokenSequence{{a0, b0, b0}}, TokenSequence{{a0, b0}}), 0.8);
}

TEST(Ranks, AverageTies) {
    EXPECT_EQ(average_ranks({10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
    EXPECT_EQ(average_ranks({3, 1, 2}), (std::vector<double>{3, 1, 2}));
    EXPECT_EQ(average_ranks({5, 5, 5}), (std::vector<double>{2, 2, 2}));
    EXPECT_TRUE(average_ranks({}).empty());
}

TEST(Spearman, MatchesReferenceValues) {
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
    EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {4, 4, 4}), 0.0);
    // Reference values from scipy.stats.spearmanr.
    EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {5, 6, 7, 8, 7}), 0.8207826816681233, 1e-12);
    EXPECT_NEAR(spearman({0, 0, 10, 10, 1000, 1000}, {0.9, 0.95, 0.9, 0.8, 0.7, 0.7}), -0.9231861823449954, 1e-12);
    EXPECT_THROW(spearman({1, 2}, {1}), ContractError);
}

TEST(SignTest, ExactBinomialTail) {
    EXPECT_DOUBLE_EQ(sign_test_p(0, 0), 1.0);
    EXPECT_NEAR(sign_test_p(5, 0), 1.0 / 32.0, 1e-12);
    EXPECT_NEAR(sign_test_p(8, 2), 56.0 / 1024.0, 1e-12);
    EXPECT_NEAR(sign_test_p(0, 4), 1.0, 1e-12);
    EXPECT_NEAR(sign_test_p(3, 3), 42.0 / 64.0, 1e-12);
    EXPECT_LT(sign_test_p(60, 40), 0.05);
    EXPECT_GT(sign_test_p(55, 45), 0.05);
    EXPECT_THROW(sign_test_p(-1, 2), ContractError);
}

struct EvalFixture {
    MarkerClassifier internal, external;
    ContentF1Similarity similarity{kVocab};
    ConstantFluency fluency{0.8};
    EvalModels models;
    std::vector<TransferRequest> requests;

    EvalFixture() {
        models.internal_classifier = &internal;
        models.external_classifier = &external;
        models.internal_provenance = Provenance{"internal", 0, 1};
        models.external_provenance = Provenance{"external", 1, 2};
        models.similarity = &similarity;
        models.fluency = &fluency;
        for (int i = 0; i < 4; ++i) {
            TransferRequest r;
            r.source = kSource;
            r.target_class = i < 3 ? 1 : 0;
            r.direction = i < 3 ? "to_1" : "to_0";
            requests.push_back(r);
        }
    }

    TransferRecord record(long item, const TokenSequence& output, bool empty = false) const {
        TransferRecord r;
        r.item = item;
        r.source = kSource;
        r.output = output;
        r.empty_output = empty;
        r.lambda = 3.0;
        return r;
    }
};

TEST(Evaluate, AttributeScoresPerRecord) {
    const EvalFixture f;
    const std::vector<TransferRecord> recs{f.record(0, kStyled), f.record(1, kPlain), f.record(2, {}, true),
                                           f.record(3, kPlain)};
    const auto rep = evaluate(recs, f.requests, GuidanceMode::attribute, f.models);
    ASSERT_EQ(rep.records.size(), 4u);
    EXPECT_EQ(rep.lambda, 3.0);
    EXPECT_EQ(rep.errors, 1);
    EXPECT_DOUBLE_EQ(rep.records[0].internal_acc, 1.0);
    EXPECT_DOUBLE_EQ(rep.records[0].internal_target_score, 0.9);
    EXPECT_DOUBLE_EQ(rep.records[0].similarity, 1.0);
    EXPECT_NEAR(rep.records[0].joint, std::cbrt(0.8), 1e-12);
    EXPECT_DOUBLE_EQ(rep.records[1].internal_acc, 0.0);
    EXPECT_NEAR(rep.records[1].internal_target_score, 0.1, 1e-12);
    EXPECT_NEAR(rep.records[1].similarity, 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(rep.records[1].joint, 0.0);
    EXPECT_TRUE(rep.records[2].error);
    EXPECT_DOUBLE_EQ(rep.records[2].similarity, 0.0);
    EXPECT_DOUBLE_EQ(rep.records[2].fluency, 0.0);
    EXPECT_DOUBLE_EQ(rep.records[3].external_acc, 1.0);
    EXPECT_NEAR(rep.overall.internal_acc, 0.5, 1e-12);
    EXPECT_FALSE(rep.overall.confusion.has_value());
}

// Overall means equal the count-weighted per-direction means.
TEST(Evaluate, DirectionsRecombineToOverall) {
    const EvalFixture f;
    const std::vector<TransferRecord> recs{f.record(0, kStyled), f.record(1, kPlain), f.record(2, kStyled),
                                           f.record(3, kStyled)};
    const auto rep = evaluate(recs, f.requests, GuidanceMode::attribute, f.models);
    ASSERT_EQ(rep.by_direction.size(), 2u);
    double acc = 0.0, sim = 0.0, joint_sum = 0.0;
    long n = 0;
    for (const auto& [d, m] : rep.by_direction) {
        acc += m.internal_acc * static_cast<double>(m.count);
        sim += m.similarity * static_cast<double>(m.count);
        joint_sum += m.joint * static_cast<double>(m.count);
        n += m.count;
    }
    EXPECT_EQ(n, rep.overall.count);
    EXPECT_NEAR(acc / static_cast<double>(n), rep.overall.internal_acc, 1e-12);
    EXPECT_NEAR(sim / static_cast<double>(n), rep.overall.similarity, 1e-12);
    EXPECT_NEAR(joint_sum / static_cast<double>(n), rep.overall.joint, 1e-12);
    EXPECT_EQ(rep.by_direction.at("to_1").count, 3);
    EXPECT_NEAR(rep.by_direction.at("to_1").internal_acc, 2.0 / 3.0, 1e-12);
    const Json j = to_json(rep);
    EXPECT_EQ(j.at("by_direction").at("to_0").at("count"), 1);
    EXPECT_EQ(j.at("records").size(), 4u);
}

TEST(Evaluate, Contracts) {
    EvalFixture f;
    const std::vector<TransferRecord> recs{f.record(0, kStyled)};
    auto m = f.models;
    m.external_provenance = Provenance{"external", 1, 1};
    EXPECT_THROW(evaluate(recs, f.requests, GuidanceMode::attribute, m), ContractError);
    m = f.models;
    m.internal_provenance.reset();
    EXPECT_THROW(evaluate(recs, f.requests, GuidanceMode::attribute, m), ContractError);
    m = f.models;
    m.external_classifier = nullptr;
    EXPECT_THROW(evaluate(recs, f.requests, GuidanceMode::attribute, m), DependencyError);
    EXPECT_THROW(evaluate(recs, f.requests, GuidanceMode::style, f.models), DependencyError);
    m = f.models;
    m.fluency = nullptr;
    EXPECT_THROW(evaluate(recs, f.requests, GuidanceMode::attribute, m), DependencyError);
    EXPECT_THROW(evaluate({f.record(9, kStyled)}, f.requests, GuidanceMode::attribute, f.models), ContractError);
    auto wrong = f.record(0, kStyled);
    wrong.source = kPlain;
    EXPECT_THROW(evaluate({wrong}, f.requests, GuidanceMode::attribute, f.models), ContractError);
}

// Style vector = weighted sum of one-hot inputs over two marker groups.
class MarkerEmbedder : public StyleModel {
public:
    const Matrix& embedding_table() const override { return table_; }
    int style_dim() const override { return 2; }
    ad::Var style_vector(ad::Tape&, ad::Var emb, ad::Var weights) const override {
        return ad::matmul(ad::matmul_tn(weights, emb), emb.tape()->constant(projection_));
    }
    using StyleModel::style_vector;

private:
    Matrix table_ = Matrix::Identity(16, 16);
    Matrix projection_ = [] {
        Matrix p = Matrix::Constant(16, 2, 0.01);
        for (int m = 0; m < 4; ++m) {
            p(kVocab.marker_id(0, m), 0) = 1.0;
            p(kVocab.marker_id(1, m), 1) = 1.0;
        }
        return p;
    }();
};

TEST(Evaluate, StyleModeUsesConfusion) {
    EvalFixture f;
    MarkerEmbedder internal, external;
    f.models.internal_embedder = &internal;
    f.models.external_embedder = &external;
    for (auto& r : f.requests) {
        r.source_exemplars = {kSource};
        r.target_exemplars = {kStyled};
    }
    const std::vector<TransferRecord> recs{f.record(0, kStyled), f.record(1, kSource), f.record(2, {}, true)};
    const auto rep = evaluate(recs, f.requests, GuidanceMode::style, f.models);
    EXPECT_DOUBLE_EQ(rep.records[0].internal_acc, 1.0);
    EXPECT_DOUBLE_EQ(*rep.records[0].confusion, 1.0);
    EXPECT_NEAR(rep.records[0].internal_target_score, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(rep.records[1].internal_acc, 0.0);
    EXPECT_DOUBLE_EQ(*rep.records[1].confusion, 0.0);
    // Empty outputs count as unconfused, so the column matches acc_ext.
    EXPECT_DOUBLE_EQ(*rep.records[2].confusion, 0.0);
    ASSERT_TRUE(rep.overall.confusion.has_value());
    EXPECT_NEAR(*rep.overall.confusion, 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(*rep.overall.confusion, rep.overall.external_acc);
}

DenoiserCheckpoint tiny_checkpoint() {
    DenoiserConfig c;
    c.vocab_size = kVocab.size();
    c.dim = 8;
    c.max_len = 6;
    c.layers = 1;
    c.heads = 2;
    c.hidden = 16;
    c.steps = 6;
    Rng init(1), e(2);
    return {Denoiser(c, init), EmbeddingTable::unit_rows(c.vocab_size, c.dim, e), ScheduleKind::paraguide, 0, 0.0, {}};
}

TEST(Sweep, DuplicatedLambdaGivesIdenticalRows) {
    const EvalFixture f;
    const auto ckpt = tiny_checkpoint();
    const Paraphraser para({}, kVocab);
    TransferConfig cfg;
    cfg.steps = 6;
    cfg.guidance.mode = GuidanceMode::attribute;
    const auto res = sweep({0.0, 0.0}, f.requests, cfg, ckpt, para, {&f.internal, nullptr}, f.models);
    ASSERT_EQ(res.rows.size(), 2u);
    EXPECT_EQ(to_json(res.rows[0].report), to_json(res.rows[1].report));
    ASSERT_EQ(res.transfers.size(), 2u);
    for (std::size_t i = 0; i < res.transfers[0].size(); ++i) {
        EXPECT_EQ(res.transfers[0][i].output, res.transfers[1][i].output);
    }
    const std::string csv = sweep_csv(res);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "lambda,acc_int,acc_ext,sim,flu,joint");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    const std::string svg = sweep_svg(res);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    std::size_t polylines = 0;
    for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
    EXPECT_EQ(polylines, 5u);
    EXPECT_EQ(sweep_json(res).at("rows").size(), 2u);
    EXPECT_FALSE(sweep_json(res).at("rows")[0].contains("records"));
    EXPECT_THROW(sweep({1.0}, f.requests, cfg, ckpt, para, {&f.internal, nullptr}, f.models), ConfigError);
}

}  // namespace
