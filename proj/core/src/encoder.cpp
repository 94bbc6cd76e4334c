#include "paradiff/encoder.hpp"

#include "paradiff/errors.hpp"

#include <algorithm>
#include <cmath>

namespace paradiff {

void EncoderConfig::validate() const {
    if (dim < 1 || heads < 1 || hidden < 1 || layers < 0) throw ContractError("encoder: sizes must be positive");
    if (dim % heads != 0) throw ContractError("encoder: dim must be divisible by heads");
}

EncoderLayout add_encoder_params(ParamSet& params, const std::string& prefix, const EncoderConfig& config,
                                 Rng& rng) {
    config.validate();
    const int d = config.dim, h = config.hidden;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sd_h = 1.0 / std::sqrt(static_cast<double>(h));
    // Residual branches start small so the stack is close to identity.
    const double out_scale = 0.5 / std::sqrt(static_cast<double>(std::max(1, config.layers)));
    EncoderLayout layout;
    for (int l = 0; l < config.layers; ++l) {
        const std::string n = prefix + ".layer" + std::to_string(l) + ".";
        EncoderLayout::Layer L{};
        L.ln1_gain = params.add(n + "ln1.gain", Matrix::Ones(1, d));
        L.ln1_bias = params.add(n + "ln1.bias", Matrix::Zero(1, d));
        L.wq = params.add(n + "attn.wq", random_normal(d, d, sd, rng));
        L.bq = params.add(n + "attn.bq", Matrix::Zero(1, d));
        L.wk = params.add(n + "attn.wk", random_normal(d, d, sd, rng));
        L.bk = params.add(n + "attn.bk", Matrix::Zero(1, d));
        L.wv = params.add(n + "attn.wv", random_normal(d, d, sd, rng));
        L.bv = params.add(n + "attn.bv", Matrix::Zero(1, d));
        L.wo = params.add(n + "attn.wo", random_normal(d, d, sd * out_scale, rng));
        L.bo = params.add(n + "attn.bo", Matrix::Zero(1, d));
        L.ln2_gain = params.add(n + "ln2.gain", Matrix::Ones(1, d));
        L.ln2_bias = params.add(n + "ln2.bias", Matrix::Zero(1, d));
        L.w1 = params.add(n + "mlp.w1", random_normal(d, h, sd, rng));
        L.b1 = params.add(n + "mlp.b1", Matrix::Zero(1, h));
        L.w2 = params.add(n + "mlp.w2", random_normal(h, d, sd_h * out_scale, rng));
        L.b2 = params.add(n + "mlp.b2", Matrix::Zero(1, d));
        layout.layers.push_back(L);
    }
    layout.final_gain = params.add(prefix + ".final_ln.gain", Matrix::Ones(1, d));
    layout.final_bias = params.add(prefix + ".final_ln.bias", Matrix::Zero(1, d));
    return layout;
}

namespace {

ad::Var linear(ParamBinding& p, ad::Var x, std::size_t w, std::size_t b) {
    return ad::add_row(ad::matmul(x, p[w]), p[b]);
}

ad::Var self_attention(ParamBinding& p, const EncoderLayout::Layer& L, int heads, ad::Var x, ad::Var key_bias) {
    const ad::Var q = linear(p, x, L.wq, L.bq);
    const ad::Var k = linear(p, x, L.wk, L.bk);
    const ad::Var v = linear(p, x, L.wv, L.bv);
    const Eigen::Index head_dim = x.cols() / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const ad::Var qh = ad::slice_cols(q, h * head_dim, head_dim);
        const ad::Var kh = ad::slice_cols(k, h * head_dim, head_dim);
        const ad::Var vh = ad::slice_cols(v, h * head_dim, head_dim);
        ad::Var scores = ad::add_row(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt), key_bias);
        outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
    }
    const ad::Var merged = heads == 1 ? outs.front() : ad::concat_cols(outs);
    return linear(p, merged, L.wo, L.bo);
}

}  // namespace

ad::Var encode(ParamBinding& p, const EncoderLayout& layout, const EncoderConfig& config, ad::Var x,
               ad::Var key_bias) {
    if (x.cols() != config.dim) throw ContractError("encoder: input width does not match dim");
    if (key_bias.rows() != 1 || key_bias.cols() != x.rows()) throw ContractError("encoder: key bias shape");
    ad::Var h = x;
    for (const auto& L : layout.layers) {
        const ad::Var a = ad::layer_norm_rows(h, p[L.ln1_gain], p[L.ln1_bias]);
        h = h + self_attention(p, L, config.heads, a, key_bias);
        const ad::Var m = ad::layer_norm_rows(h, p[L.ln2_gain], p[L.ln2_bias]);
        h = h + linear(p, ad::gelu(linear(p, m, L.w1, L.b1)), L.w2, L.b2);
    }
    return ad::layer_norm_rows(h, p[layout.final_gain], p[layout.final_bias]);
}

}  // namespace paradiff
