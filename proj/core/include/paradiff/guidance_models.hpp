#pragma once

#include "paradiff/checkpoint.hpp"
#include "paradiff/corpus.hpp"
#include "paradiff/encoder.hpp"
#include "paradiff/guidance.hpp"

#include <filesystem>

namespace paradiff {

struct ToyModelConfig {
    int vocab_size = 64;
    int max_len = 16;
    int dim = 32;
    int heads = 2;
    int hidden = 64;
    int layers = 1;
    int outputs = 2;  // classes, or style dimension

    void validate() const;
    EncoderConfig encoder() const { return {dim, heads, hidden, layers}; }
};

void to_json(Json& j, const ToyModelConfig& c);
void from_json(const Json& j, ToyModelConfig& c);

// Where a guidance/evaluation model came from; internal and external models
// must differ in both.
struct Provenance {
    std::string role;  // e.g. "internal", "external"
    int fold = 0;
    std::uint64_t seed = 0;
};

void to_json(Json& j, const Provenance& p);
void from_json(const Json& j, Provenance& p);
// Throws ContractError unless a and b use different seeds and folds.
void check_disjoint(const Provenance& a, const Provenance& b);

// Shared body: own embedding table E_phi, positions, a small bidirectional
// encoder with soft key masking, weighted mean pooling and a linear head.
class ToyEncoderModel {
public:
    ToyEncoderModel(const ToyModelConfig& config, Rng& rng);

    const ToyModelConfig& config() const { return config_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    const Matrix& table() const { return params_.at(embedding_); }

    // 1 x outputs head output.
    ad::Var head(ParamBinding& p, ad::Var soft_embeddings, ad::Var position_weights) const;
    // Same, for token ids on a training tape (embedding lookup is differentiable).
    ad::Var head_ids(ParamBinding& p, std::span<const int> ids) const;

private:
    ToyModelConfig config_;
    ParamSet params_;
    std::size_t embedding_ = 0, positions_ = 0, out_weight_ = 0, out_bias_ = 0;
    EncoderLayout encoder_;
};

class ToyAttributeClassifier : public AttributeModel {
public:
    ToyAttributeClassifier(const ToyModelConfig& config, Rng& rng, Provenance provenance = {});

    const Matrix& embedding_table() const override { return body_.table(); }
    std::vector<int> encode_input(const TokenSequence& text) const override;
    int num_classes() const override { return body_.config().outputs; }
    ad::Var class_log_probs(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const override;

    int predict(const TokenSequence& text) const;

    ToyEncoderModel& body() { return body_; }
    const ToyEncoderModel& body() const { return body_; }
    const Provenance& provenance() const { return provenance_; }

private:
    ToyEncoderModel body_;
    Provenance provenance_;
};

class ToyStyleEmbedder : public StyleModel {
public:
    ToyStyleEmbedder(const ToyModelConfig& config, Rng& rng, Provenance provenance = {});

    const Matrix& embedding_table() const override { return body_.table(); }
    std::vector<int> encode_input(const TokenSequence& text) const override;
    int style_dim() const override { return body_.config().outputs; }
    ad::Var style_vector(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const override;
    using StyleModel::style_vector;

    ToyEncoderModel& body() { return body_; }
    const ToyEncoderModel& body() const { return body_; }
    const Provenance& provenance() const { return provenance_; }

private:
    ToyEncoderModel body_;
    Provenance provenance_;
};

// Binary classifier: class 1 = fluent corpus text, class 0 = shuffled text.
class ToyFluencyScorer {
public:
    ToyFluencyScorer(const ToyModelConfig& config, Rng& rng, Provenance provenance = {});

    double fluency(const TokenSequence& text) const;
    ToyAttributeClassifier& classifier() { return classifier_; }
    const ToyAttributeClassifier& classifier() const { return classifier_; }

private:
    ToyAttributeClassifier classifier_;
};

struct ToyTrainConfig {
    ToyModelConfig model;
    int steps = 600;
    int batch_size = 32;
    double learning_rate = 3e-3;
    double temperature = 0.1;  // contrastive (style embedder) only

    void validate() const;
};

Json to_json(const ToyTrainConfig& c);
ToyTrainConfig toy_train_config_from_json(const Json& j, const std::string& context, ToyTrainConfig defaults = {});

struct LabeledExample {
    TokenSequence tokens;
    int label = 0;
};

struct ClassifierReport {
    double heldout_accuracy = 0.0;
};

// Trains on `train`, scores `heldout`. Requires >= 2 classes present.
// Throws ContractError if held-out accuracy is below 0.75.
ToyAttributeClassifier train_classifier(const std::vector<LabeledExample>& train,
                                        const std::vector<LabeledExample>& heldout, const ToyTrainConfig& config,
                                        Provenance provenance, ClassifierReport* report = nullptr);

double classifier_accuracy(const ToyAttributeClassifier& model, const std::vector<LabeledExample>& data);

struct EmbedderReport {
    double same_author_similarity = 0.0;
    double different_author_similarity = 0.0;
    double margin() const { return same_author_similarity - different_author_similarity; }
};

// Contrastive (InfoNCE) training: positives are two texts by the same author.
// Requires >= 4 authors with >= 8 texts each. Throws ContractError if the
// held-out margin is below 0.05.
ToyStyleEmbedder train_style_embedder(const std::vector<LabeledExample>& train_by_author,
                                      const std::vector<LabeledExample>& heldout_by_author,
                                      const ToyTrainConfig& config, Provenance provenance,
                                      EmbedderReport* report = nullptr);

EmbedderReport author_separation(const StyleModel& model, const std::vector<LabeledExample>& by_author);

// A token-order shuffle that differs from the input whenever possible.
TokenSequence shuffled_corruption(const TokenSequence& text, Rng& rng);

struct FluencyReport {
    double heldout_auc = 0.0;
};

// Throws ContractError if held-out AUC is not above 0.9.
ToyFluencyScorer train_fluency_scorer(const std::vector<TokenSequence>& train, const std::vector<TokenSequence>& heldout,
                                      const ToyTrainConfig& config, Provenance provenance,
                                      FluencyReport* report = nullptr);

double fluency_auc(const ToyFluencyScorer& model, const std::vector<TokenSequence>& texts, std::uint64_t seed);

// Area under the ROC curve (ties count one half).
double roc_auc(const std::vector<double>& positive_scores, const std::vector<double>& negative_scores);

void save_classifier(const std::filesystem::path& path, const ToyAttributeClassifier& model, const Json& extra = {});
ToyAttributeClassifier load_classifier(const std::filesystem::path& path);
void save_style_embedder(const std::filesystem::path& path, const ToyStyleEmbedder& model, const Json& extra = {});
ToyStyleEmbedder load_style_embedder(const std::filesystem::path& path);
void save_fluency_scorer(const std::filesystem::path& path, const ToyFluencyScorer& model, const Json& extra = {});
ToyFluencyScorer load_fluency_scorer(const std::filesystem::path& path);

}  // namespace paradiff
