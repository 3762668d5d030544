#pragma once

#include "cred/boxes.hpp"
#include "cred/cram.hpp"
#include "cred/osma.hpp"
#include "cred/params.hpp"
#include "cred/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cred::detr {

enum class Variant { baseline, dc, default_cred, dcx025_cred, oo_cred };

Variant parse_variant(const std::string& name);  // baseline, dc, default, dcx025, oo
std::string to_string(Variant v);
bool uses_cram(Variant v);

struct Config {
    std::size_t d_model = 32;
    std::size_t heads = 4;
    std::size_t enc_layers = 2;
    std::size_t dec_layers = 2;
    std::size_t d_ff = 64;
    std::size_t num_queries = 10;
    std::size_t num_classes = 3;
    Variant variant = Variant::default_cred;
    // Baseline only: shrink F5 by this factor before the encoder (1 or 2).
    std::size_t baseline_downsample = 1;
    // Add sine positions to the CRAM output before decoder cross-attention.
    bool decoder_positions = true;
    double eps = 1e-5;

    void validate() const;
};

// Everything cred_detr_forward needs. `osma` feeds the encoder; `osma_c`
// initializes CRAM in the OO variant.
struct ModelConfig {
    Config detr;
    osma::Config osma;
    osma::Config osma_c;
    cram::Config cram;

    // Preset for a variant: OSMA {g0, P} pairs and CRAM wiring per variant,
    // CRAM widths and layer counts tied to the transformer.
    static ModelConfig preset(Variant v, std::size_t d_model, std::size_t layers);
    void validate() const;
};

// --- parameters ------------------------------------------------------------

struct AttentionParams {
    Linear q, k, v, out;
    static AttentionParams init(std::size_t c, CounterRng& rng);
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderLayerParams {
    Norm norm1, norm2;
    AttentionParams attn;
    Linear ff1, ff2;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct DecoderLayerParams {
    Norm norm1, norm2, norm3;
    AttentionParams self_attn, cross_attn;
    Linear ff1, ff2;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct HeadParams {
    Linear cls;
    Linear box1, box2, box3;
    void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct Params {
    std::vector<Linear> backbone;  // five space-to-depth stages
    osma::Params osma;
    osma::Params osma_c;
    cram::Params cram;
    std::vector<EncoderLayerParams> encoder;
    std::vector<DecoderLayerParams> decoder;
    Norm decoder_norm;
    Tensor query_embed;  // [N_q, C]
    HeadParams heads;

    static Params init(const ModelConfig& cfg, std::uint64_t seed);
    // Visits every tensor of the configured variant in a fixed order.
    void visit(const ModelConfig& cfg, const ParamVisitor& fn);
    std::vector<Tensor> tensors(const ModelConfig& cfg);
};

static constexpr std::size_t kInputChannels = 3;

// --- pipeline stages ------------------------------------------------------

// Five stages of space_to_depth(2) + channel projection + SiLU. Returns
// levels {F5, F4, F3} (strides 32, 16, 8).
FeaturePyramid toy_backbone(const Tensor& image, const std::vector<Linear>& stages);

// Sine/cosine 2D encoding [C, H, W]: first half of the channels encodes
// rows, second half columns; within a half, even offsets use sin and odd
// offsets cos of (pos + 1) / extent * 2 pi / 10000^(2 floor(k/2) / half).
Tensor sine_pos_embed(std::size_t height, std::size_t width, std::size_t channels);

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value, const AttentionParams& p,
                            std::size_t heads);

// Pre-norm encoder. Returns the output of every layer.
std::vector<Tensor> encoder_forward(const Tensor& tokens, const Tensor& pos, const std::vector<EncoderLayerParams>& p,
                                    const Config& cfg);

// Pre-norm decoder; `queries` doubles as the query positional embedding.
Tensor decoder_forward(const Tensor& memory, const Tensor& memory_pos, const Tensor& queries,
                       const std::vector<DecoderLayerParams>& p, const Norm& final_norm, const Config& cfg);

struct Prediction {
    Tensor class_logits;  // [N_q, K+1], last column = no object
    Tensor boxes;         // [N_q, 4], sigmoid (cx, cy, w, h)
};

Prediction predict_heads(const Tensor& decoded, const HeadParams& p);

// Intermediate shapes of one forward pass (for contracts and diagnostics).
struct ForwardTrace {
    std::size_t encoder_h = 0, encoder_w = 0;
    std::size_t decoder_h = 0, decoder_w = 0;
    std::size_t encoder_tokens() const { return encoder_h * encoder_w; }
    std::size_t memory_tokens() const { return decoder_h * decoder_w; }
};

Prediction cred_detr_forward(const Tensor& image, const Params& params, const ModelConfig& cfg,
                             ForwardTrace* trace = nullptr);

// --- matching and loss ----------------------------------------------------

std::vector<std::size_t> hungarian_match(const Tensor& cost);  // cost [N_q, n_gt]

struct LossWeights {
    double cls = 1.0;
    double l1 = 5.0;
    double giou = 2.0;
    double no_object = 0.1;  // cross-entropy weight of unmatched queries
};

struct LossTerms {
    Tensor total;
    double ce = 0, l1 = 0, giou = 0;
    std::vector<std::size_t> assignment;  // query per ground truth
};

// Matching cost [N_q, n_gt] = w_cls * (-p(class)) + w_l1 * L1 + w_giou * (1 - giou).
std::vector<double> matching_cost(const Prediction& pred, const BoxSet& gt, const LossWeights& w);

LossTerms set_loss(const Prediction& pred, const BoxSet& gt, const LossWeights& w = {});

}  // namespace cred::detr
