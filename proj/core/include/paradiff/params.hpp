#pragma once

#include "paradiff/autodiff.hpp"
#include "paradiff/rng.hpp"

#include <string>
#include <vector>

namespace paradiff {

using ad::Matrix;

// Ordered collection of named trainable matrices.
class ParamSet {
public:
    std::size_t add(std::string name, Matrix init);
    std::size_t index_of(const std::string& name) const;

    Matrix& at(std::size_t i) { return values_.at(i); }
    const Matrix& at(std::size_t i) const { return values_.at(i); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    std::size_t size() const { return values_.size(); }
    std::size_t scalar_count() const;

    std::vector<Matrix> zeros_like() const;
    bool all_finite() const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
};

using Gradients = std::vector<Matrix>;

void add_into(Gradients& total, const Gradients& part);
double global_norm(const Gradients& g);

// Lazily materializes parameters of a ParamSet on a tape. With a null
// gradient sink every parameter is a constant (no-grad forward).
class ParamBinding {
public:
    ParamBinding(ad::Tape& tape, const ParamSet& params, Gradients* sink = nullptr);

    ad::Var operator[](std::size_t i);
    ad::Tape& tape() { return tape_; }

private:
    ad::Tape& tape_;
    const ParamSet& params_;
    Gradients* sink_;
    std::vector<ad::Var> bound_;
};

// Momentum-free RMSProp with bias-corrected second moment and optional
// global-norm clipping.
class RmsProp {
public:
    struct Options {
        double learning_rate = 2e-3;
        double decay = 0.99;
        double epsilon = 1e-8;
        double clip_norm = 1.0;  // <= 0 disables clipping
    };

    RmsProp(const ParamSet& params, Options options);
    void step(ParamSet& params, const Gradients& grads);

private:
    Options options_;
    std::vector<Matrix> mean_square_;
    long steps_ = 0;
};

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

}  // namespace paradiff
