#pragma once

#include "paradiff/params.hpp"

#include <string>
#include <vector>

namespace paradiff {

struct EncoderConfig {
    int dim = 32;
    int heads = 4;
    int hidden = 64;
    int layers = 2;

    void validate() const;
    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Parameter indices of a pre-LayerNorm bidirectional transformer stack.
struct EncoderLayout {
    struct Layer {
        std::size_t ln1_gain, ln1_bias;
        std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
        std::size_t ln2_gain, ln2_bias;
        std::size_t w1, b1, w2, b2;
    };
    std::vector<Layer> layers;
    std::size_t final_gain = 0, final_bias = 0;
};

EncoderLayout add_encoder_params(ParamSet& params, const std::string& prefix, const EncoderConfig& config,
                                 Rng& rng);

// x: N x dim. key_bias: 1 x N additive attention bias (0 attends, very
// negative masks the key). Returns the final-LayerNorm output, N x dim.
ad::Var encode(ParamBinding& p, const EncoderLayout& layout, const EncoderConfig& config, ad::Var x,
               ad::Var key_bias);

}  // namespace paradiff
