#include "paradiff/guidance.hpp"

#include "paradiff/errors.hpp"
#include "paradiff/schedules.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace paradiff {

namespace {
// Added inside log() for attention key weights; keeps gradients finite when a
// position is almost surely padding.
constexpr double kWeightFloor = 1e-12;
constexpr double kMinStyleNorm = 1e-12;
}  // namespace

std::string_view to_string(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::none: return "none";
        case GuidanceMode::attribute: return "attribute";
        case GuidanceMode::style: return "style";
    }
    return "none";
}

GuidanceMode parse_guidance_mode(std::string_view name) {
    if (name == "none") return GuidanceMode::none;
    if (name == "attribute") return GuidanceMode::attribute;
    if (name == "style") return GuidanceMode::style;
    throw ConfigError("unknown guidance mode: " + std::string(name));
}

void GuidanceSpec::validate() const {
    if (k < 1) throw ConfigError("guidance.k must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("guidance.tau must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("guidance.lambda must be >= 0");
    if (mode == GuidanceMode::style && exemplars.empty()) {
        throw ConfigError("style guidance needs at least one exemplar");
    }
}

HardInput hard_input(const GuidanceModel& model, std::span<const int> ids) {
    const Matrix& table = model.embedding_table();
    HardInput in{Matrix(static_cast<Eigen::Index>(ids.size()), table.cols()),
                 Matrix(static_cast<Eigen::Index>(ids.size()), 1)};
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) throw ContractError("guidance model: token id outside vocabulary");
        const auto r = static_cast<Eigen::Index>(i);
        in.embeddings.row(r) = table.row(ids[i]);
        in.weights(r, 0) = ids[i] == kPadId ? 0.0 : 1.0;
    }
    return in;
}

Vector AttributeModel::class_probs(const TokenSequence& text) const {
    const HardInput in = hard_input(*this, encode_input(text));
    ad::Tape tape;
    const ad::Var lp = class_log_probs(tape, tape.constant(in.embeddings), tape.constant(in.weights));
    return lp.value().row(0).transpose().array().exp();
}

Vector StyleModel::style_vector(const TokenSequence& text) const {
    const HardInput in = hard_input(*this, encode_input(text));
    ad::Tape tape;
    return style_vector(tape, tape.constant(in.embeddings), tape.constant(in.weights)).value().row(0).transpose();
}

Matrix simplex_project(const Matrix& logits, double tau, const Matrix& embedding_table) {
    if (!(tau > 0.0)) throw DomainError("simplex_project: tau must be > 0");
    if (logits.cols() != embedding_table.rows()) throw ContractError("simplex_project: vocabulary size mismatch");
    ad::Tape tape;
    const ad::Var p = ad::softmax_rows(ad::scale(tape.constant(logits), 1.0 / tau));
    return p.value() * embedding_table;
}

SoftInput soft_input(ad::Var logits, double tau, const GuidanceModel& model, std::span<const double> position_mask) {
    if (!(tau > 0.0)) throw DomainError("guidance: tau must be > 0");
    if (logits.cols() != model.vocab_size()) throw ContractError("guidance: logits and guidance vocabulary differ");
    ad::Tape& tape = *logits.tape();
    SoftInput in;
    in.probs = ad::softmax_rows(ad::scale(logits, 1.0 / tau));
    in.embeddings = ad::matmul(in.probs, tape.constant(model.embedding_table()));
    in.weights = ad::add_scalar(ad::scale(ad::slice_cols(in.probs, kPadId, 1), -1.0), 1.0);
    if (!position_mask.empty()) {
        if (static_cast<Eigen::Index>(position_mask.size()) != logits.rows()) {
            throw ContractError("guidance: position mask length differs from sequence length");
        }
        Matrix m(logits.rows(), 1);
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = position_mask[static_cast<std::size_t>(i)];
        in.weights = ad::mul(in.weights, tape.constant(std::move(m)));
    }
    return in;
}

AttributeObjective::AttributeObjective(const AttributeModel& model, int target_class, double tau)
    : model_(model), target_(target_class), tau_(tau) {
    if (target_class < 0 || target_class >= model.num_classes()) {
        throw DomainError("attribute guidance: class " + std::to_string(target_class) + " outside [0, " +
                          std::to_string(model.num_classes()) + ")");
    }
    if (!(tau > 0.0)) throw DomainError("attribute guidance: tau must be > 0");
}

LossGrad AttributeObjective::evaluate(const Matrix& logits, std::span<const double> position_mask) const {
    ad::Tape tape;
    const ad::Var l = tape.variable(logits);
    const SoftInput in = soft_input(l, tau_, model_, position_mask);
    const ad::Var lp = model_.class_log_probs(tape, in.embeddings, in.weights);
    const ad::Var loss = ad::scale(ad::element(lp, 0, target_), -1.0);
    tape.backward(loss);
    return {loss.scalar(), l.has_grad() ? l.grad() : Matrix::Zero(logits.rows(), logits.cols())};
}

StyleObjective::StyleObjective(const StyleModel& model, const std::vector<TokenSequence>& exemplars, double tau)
    : model_(model), tau_(tau) {
    if (exemplars.empty()) throw DomainError("style guidance: at least one exemplar required");
    if (!(tau > 0.0)) throw DomainError("style guidance: tau must be > 0");
    targets_.resize(static_cast<Eigen::Index>(exemplars.size()), model.style_dim());
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
        const Vector v = model.style_vector(exemplars[i]);
        const double n = v.norm();
        if (!(n > kMinStyleNorm)) throw DomainError("style guidance: exemplar " + std::to_string(i) + " has a zero-norm style vector");
        targets_.row(static_cast<Eigen::Index>(i)) = v.transpose() / n;
    }
}

LossGrad StyleObjective::evaluate(const Matrix& logits, std::span<const double> position_mask) const {
    ad::Tape tape;
    const ad::Var l = tape.variable(logits);
    const SoftInput in = soft_input(l, tau_, model_, position_mask);
    const ad::Var g = model_.style_vector(tape, in.embeddings, in.weights);
    if (!(g.value().norm() > kMinStyleNorm)) throw DomainError("style guidance: zero-norm style vector for the current logits");
    const ad::Var cos = ad::matmul_nt(ad::l2_normalize_rows(g), tape.constant(targets_));  // 1 x n
    const double n = static_cast<double>(targets_.rows());
    const ad::Var loss = ad::add_scalar(ad::scale(ad::sum(cos), -1.0 / n), 1.0);
    tape.backward(loss);
    return {loss.scalar(), l.has_grad() ? l.grad() : Matrix::Zero(logits.rows(), logits.cols())};
}

double attribute_loss(const Matrix& logits, int target_class, const AttributeModel& model, double tau) {
    return AttributeObjective(model, target_class, tau).evaluate(logits).loss;
}

double style_loss(const Matrix& logits, const std::vector<TokenSequence>& exemplars, const StyleModel& model, double tau) {
    return StyleObjective(model, exemplars, tau).evaluate(logits).loss;
}

Matrix apply_guidance(const Matrix& l_init, const GuidanceSpec& spec, int t, int T, const GuidanceObjective* objective,
                      std::span<const double> position_mask, GuidanceStats* stats) {
    if (spec.mode == GuidanceMode::none || spec.lambda == 0.0) return l_init;
    spec.validate();
    const double strength = guidance_strength(spec.lambda, t, T);
    if (strength == 0.0) return l_init;
    if (objective == nullptr) throw ContractError("apply_guidance: guided mode without a guidance objective");
    if (stats) ++stats->steps;

    auto fail_open = [&](const char* why) {
        spdlog::warn("guidance step t={} skipped: {}", t, why);
        if (stats) ++stats->aborted;
        return l_init;
    };

    if (spec.rule == GradientRule::literal) {
        const LossGrad lg = objective->evaluate(l_init, position_mask);
        if (!lg.grad.allFinite()) return fail_open("non-finite guidance gradient");
        if (stats) stats->updates += spec.k;
        return l_init - (static_cast<double>(spec.k) * strength) * lg.grad;
    }
    Matrix l = l_init;
    for (int i = 0; i < spec.k; ++i) {
        const LossGrad lg = objective->evaluate(l, position_mask);
        if (!lg.grad.allFinite()) return fail_open("non-finite guidance gradient");
        l -= strength * lg.grad;
        if (stats) ++stats->updates;
    }
    return l;
}

}  // namespace paradiff
