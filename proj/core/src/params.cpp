#include "paradiff/params.hpp"

#include "paradiff/errors.hpp"

#include <cmath>

namespace paradiff {

std::size_t ParamSet::add(std::string name, Matrix init) {
    for (const auto& n : names_) {
        if (n == name) throw ContractError("duplicate parameter name: " + name);
    }
    names_.push_back(std::move(name));
    values_.push_back(std::move(init));
    return values_.size() - 1;
}

std::size_t ParamSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return i;
    }
    throw ContractError("unknown parameter: " + name);
}

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

std::vector<Matrix> ParamSet::zeros_like() const {
    std::vector<Matrix> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
    return out;
}

bool ParamSet::all_finite() const {
    for (const auto& v : values_) {
        if (!v.allFinite()) return false;
    }
    return true;
}

void add_into(Gradients& total, const Gradients& part) {
    if (total.size() != part.size()) throw ContractError("gradient sets differ in size");
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += part[i];
}

double global_norm(const Gradients& g) {
    double s = 0.0;
    for (const auto& m : g) s += m.squaredNorm();
    return std::sqrt(s);
}

ParamBinding::ParamBinding(ad::Tape& tape, const ParamSet& params, Gradients* sink)
    : tape_(tape), params_(params), sink_(sink), bound_(params.size()) {
    if (sink_ != nullptr && sink_->size() != params.size()) throw ContractError("gradient sink size mismatch");
}

ad::Var ParamBinding::operator[](std::size_t i) {
    auto& v = bound_.at(i);
    if (!v.valid()) v = tape_.parameter(params_.at(i), sink_ ? &(*sink_)[i] : nullptr);
    return v;
}

RmsProp::RmsProp(const ParamSet& params, Options options)
    : options_(options), mean_square_(params.zeros_like()) {}

void RmsProp::step(ParamSet& params, const Gradients& grads) {
    if (grads.size() != params.size()) throw ContractError("gradient/parameter count mismatch");
    double factor = 1.0;
    if (options_.clip_norm > 0.0) {
        const double norm = global_norm(grads);
        if (norm > options_.clip_norm) factor = options_.clip_norm / norm;
    }
    ++steps_;
    const double correction = 1.0 - std::pow(options_.decay, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix g = grads[i] * factor;
        auto& ms = mean_square_[i];
        ms = options_.decay * ms + (1.0 - options_.decay) * g.cwiseProduct(g);
        params.at(i).array() -= options_.learning_rate * g.array() / ((ms.array() / correction).sqrt() + options_.epsilon);
    }
}

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    // Row-major fill order keeps draws independent of Eigen's storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
    }
    return m;
}

}  // namespace paradiff
