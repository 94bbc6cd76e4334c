#pragma once

#include "paradiff/guidance_models.hpp"
#include "paradiff/inference.hpp"

#include <map>
#include <optional>

namespace paradiff {

// (acc * sim * flu)^(1/3).
double joint(double accuracy, double similarity, double fluency);

// 1 iff the output is strictly closer (cosine distance) to the target
// centroid than to the source centroid. Throws DomainError on a zero-norm
// vector.
int confusion(const Vector& output, const std::vector<Vector>& source_exemplars,
              const std::vector<Vector>& target_exemplars);
int confusion(const TokenSequence& output, const std::vector<TokenSequence>& source_exemplars,
              const std::vector<TokenSequence>& target_exemplars, const StyleModel& embedder);

// F1 between the content-class multisets of two texts.
double content_f1(const TokenSequence& output, const TokenSequence& source, const Vocabulary& vocab);

class SimilarityScorer {
public:
    virtual ~SimilarityScorer() = default;
    // In [0, 1].
    virtual double score(const TokenSequence& output, const TokenSequence& source) const = 0;
};

class ContentF1Similarity : public SimilarityScorer {
public:
    explicit ContentF1Similarity(Vocabulary vocab) : vocab_(std::move(vocab)) {}
    double score(const TokenSequence& output, const TokenSequence& source) const override {
        return content_f1(output, source, vocab_);
    }

private:
    Vocabulary vocab_;
};

class FluencyModel {
public:
    virtual ~FluencyModel() = default;
    // In [0, 1].
    virtual double score(const TokenSequence& text) const = 0;
};

class ToyFluency : public FluencyModel {
public:
    explicit ToyFluency(const ToyFluencyScorer& scorer) : scorer_(scorer) {}
    double score(const TokenSequence& text) const override { return scorer_.fluency(text); }

private:
    const ToyFluencyScorer& scorer_;
};

// Scorers for one evaluation. Internal and external models must come from
// disjoint provenance.
struct EvalModels {
    const AttributeModel* internal_classifier = nullptr;
    const AttributeModel* external_classifier = nullptr;
    const StyleModel* internal_embedder = nullptr;
    const StyleModel* external_embedder = nullptr;
    std::optional<Provenance> internal_provenance;
    std::optional<Provenance> external_provenance;
    const SimilarityScorer* similarity = nullptr;
    const FluencyModel* fluency = nullptr;
};

struct RecordScores {
    long item = 0;
    std::string direction;
    double internal_acc = 0.0;
    double external_acc = 0.0;
    double similarity = 0.0;
    double fluency = 0.0;
    double joint = 0.0;
    std::optional<double> confusion;
    // Attribute mode: internal classifier probability of the target class.
    // Style mode: internal cosine similarity to the target centroid.
    double internal_target_score = 0.0;
    bool error = false;
};

struct MetricMeans {
    long count = 0;
    double internal_acc = 0.0;
    double external_acc = 0.0;
    double similarity = 0.0;
    double fluency = 0.0;
    double joint = 0.0;
    std::optional<double> confusion;
    double internal_target_score = 0.0;
};

MetricMeans mean_scores(const std::vector<RecordScores>& scores);

struct EvalReport {
    GuidanceMode mode = GuidanceMode::none;
    double lambda = 0.0;
    std::vector<RecordScores> records;
    MetricMeans overall;
    std::map<std::string, MetricMeans> by_direction;
    long errors = 0;
    Json run = Json::object();
};

Json to_json(const RecordScores& s);
Json to_json(const MetricMeans& m);
Json to_json(const EvalReport& r);

// Scores records[i] against requests[records[i].item]. `mode` picks the
// metric family (attribute accuracy or style confusion).
EvalReport evaluate(const std::vector<TransferRecord>& records, const std::vector<TransferRequest>& requests,
                    GuidanceMode mode, const EvalModels& models);

struct SweepRow {
    double lambda = 0.0;
    EvalReport report;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::vector<TransferRecord>> transfers;
};

// Transfer + evaluate for each lambda in order. Per-item failures stay in the
// records; the sweep itself does not abort on them.
SweepResult sweep(const std::vector<double>& lambdas, const std::vector<TransferRequest>& requests,
                  const TransferConfig& cfg, const DenoiserCheckpoint& checkpoint, const Paraphraser& paraphraser,
                  const GuidanceModels& guidance, const EvalModels& eval);

// lambda,acc_int,acc_ext,sim,flu,joint[,confusion]
std::string sweep_csv(const SweepResult& result);
Json sweep_json(const SweepResult& result);
// Trade-off curve: one polyline per metric against lambda.
std::string sweep_svg(const SweepResult& result);

// Average ranks (ties share the mean rank), 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);
// Pearson correlation of average ranks. 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
// One-sided exact sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(long wins, long losses);

}  // namespace paradiff
