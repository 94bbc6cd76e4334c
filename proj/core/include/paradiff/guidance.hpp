#pragma once

#include "paradiff/autodiff.hpp"
#include "paradiff/json_io.hpp"
#include "paradiff/vocab.hpp"

#include <span>
#include <string>
#include <vector>

namespace paradiff {

using ad::Matrix;
using ad::Vector;

enum class GuidanceMode { none, attribute, style };
std::string_view to_string(GuidanceMode mode);
GuidanceMode parse_guidance_mode(std::string_view name);

// recompute: each of the k inner updates re-evaluates the gradient at the
// current logits. literal: every update reuses the gradient at l_init, i.e.
// one step of size k * lambda_t.
enum class GradientRule { recompute, literal };

struct GuidanceSpec {
    GuidanceMode mode = GuidanceMode::none;
    int target_class = 0;                    // attribute mode
    std::vector<TokenSequence> exemplars;    // style mode
    double lambda = 0.0;
    int k = 3;
    double tau = 3.0;
    GradientRule rule = GradientRule::recompute;

    void validate() const;
};

// A differentiable scorer over the shared vocabulary. It sees text through its
// own embedding table E_phi, either as token ids or as soft embeddings with
// per-position weights in [0, 1] (0 = padding).
class GuidanceModel {
public:
    virtual ~GuidanceModel() = default;
    virtual const Matrix& embedding_table() const = 0;
    // Token ids the model expects for a plain text (e.g. with </s> and pads).
    virtual std::vector<int> encode_input(const TokenSequence& text) const { return text.ids; }
    int vocab_size() const { return static_cast<int>(embedding_table().rows()); }
};

class AttributeModel : public GuidanceModel {
public:
    virtual int num_classes() const = 0;
    // 1 x C class log-probabilities.
    virtual ad::Var class_log_probs(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const = 0;
    Vector class_probs(const TokenSequence& text) const;
};

class StyleModel : public GuidanceModel {
public:
    virtual int style_dim() const = 0;
    // 1 x D_s style vector (not normalized).
    virtual ad::Var style_vector(ad::Tape& tape, ad::Var soft_embeddings, ad::Var position_weights) const = 0;
    Vector style_vector(const TokenSequence& text) const;
};

// Soft input built from token ids: one-hot rows, weight 0 on pads.
struct HardInput {
    Matrix embeddings;
    Matrix weights;  // L x 1
};
HardInput hard_input(const GuidanceModel& model, std::span<const int> ids);

// softmax(logits / tau) * E_phi, row-wise.
Matrix simplex_project(const Matrix& logits, double tau, const Matrix& embedding_table);

struct SoftInput {
    ad::Var probs;       // softmax(l / tau)
    ad::Var embeddings;  // probs * E_phi
    ad::Var weights;     // (1 - probs[:, pad]) * position_mask
};
SoftInput soft_input(ad::Var logits, double tau, const GuidanceModel& model, std::span<const double> position_mask = {});

struct LossGrad {
    double loss = 0.0;
    Matrix grad;  // d loss / d logits
};

// A guidance loss over the full logit matrix. Adapters for external scorers
// implement this directly.
class GuidanceObjective {
public:
    virtual ~GuidanceObjective() = default;
    // position_mask empty means every position participates.
    virtual LossGrad evaluate(const Matrix& logits, std::span<const double> position_mask = {}) const = 0;
};

// -log f(y | softmax(l / tau) E_phi)
class AttributeObjective : public GuidanceObjective {
public:
    AttributeObjective(const AttributeModel& model, int target_class, double tau);
    LossGrad evaluate(const Matrix& logits, std::span<const double> position_mask = {}) const override;

private:
    const AttributeModel& model_;
    int target_;
    double tau_;
};

// Mean cosine distance between g(softmax(l / tau) E_phi) and g(y_i).
class StyleObjective : public GuidanceObjective {
public:
    StyleObjective(const StyleModel& model, const std::vector<TokenSequence>& exemplars, double tau);
    LossGrad evaluate(const Matrix& logits, std::span<const double> position_mask = {}) const override;
    const Matrix& exemplar_directions() const { return targets_; }

private:
    const StyleModel& model_;
    Matrix targets_;  // n x D_s, unit rows
    double tau_;
};

double attribute_loss(const Matrix& logits, int target_class, const AttributeModel& model, double tau);
double style_loss(const Matrix& logits, const std::vector<TokenSequence>& exemplars, const StyleModel& model, double tau);

struct GuidanceStats {
    long steps = 0;
    long updates = 0;
    long aborted = 0;  // non-finite gradient, logits left at l_init
};

// k updates l <- l - lambda sin(pi t / T) grad L(l), starting from l_init.
// Identity for mode none, lambda 0, t = 0 and t = T.
Matrix apply_guidance(const Matrix& l_init, const GuidanceSpec& spec, int t, int T, const GuidanceObjective* objective,
                      std::span<const double> position_mask = {}, GuidanceStats* stats = nullptr);

}  // namespace paradiff
