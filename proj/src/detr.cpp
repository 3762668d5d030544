#include "cred/detr.hpp"

#include "cred/hungarian.hpp"
#include "cred/ops.hpp"

#include <cmath>
#include <numbers>

namespace cred::detr {

Variant parse_variant(const std::string& name) {
    if (name == "baseline") return Variant::baseline;
    if (name == "dc") return Variant::dc;
    if (name == "default" || name == "default-cred") return Variant::default_cred;
    if (name == "dcx025" || name == "dcx0.25" || name == "dcx025-cred") return Variant::dcx025_cred;
    if (name == "oo" || name == "oo-cred") return Variant::oo_cred;
    throw ValueError("unknown variant '" + name + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::dc: return "dc";
        case Variant::default_cred: return "default";
        case Variant::dcx025_cred: return "dcx025";
        case Variant::oo_cred: return "oo";
    }
    return "?";
}

bool uses_cram(Variant v) { return v != Variant::baseline && v != Variant::dc; }

void Config::validate() const {
    if (d_model == 0) throw ValueError("detr.d_model: must be >= 1");
    if (heads == 0 || d_model % heads) throw ValueError("detr.heads: must divide detr.d_model");
    if (d_model % 2) throw ValueError("detr.d_model: must be even for sine positions");
    if (enc_layers == 0) throw ValueError("detr.enc_layers: must be >= 1");
    if (dec_layers == 0) throw ValueError("detr.dec_layers: must be >= 1");
    if (d_ff == 0) throw ValueError("detr.d_ff: must be >= 1");
    if (num_queries == 0) throw ValueError("detr.num_queries: must be >= 1");
    if (num_classes == 0) throw ValueError("detr.num_classes: must be >= 1");
    if (baseline_downsample != 1 && baseline_downsample != 2) {
        throw ValueError("detr.baseline_downsample: must be 1 or 2");
    }
}

ModelConfig ModelConfig::preset(Variant v, std::size_t d_model, std::size_t layers) {
    ModelConfig cfg;
    cfg.detr.variant = v;
    cfg.detr.d_model = d_model;
    cfg.detr.enc_layers = layers;
    cfg.detr.dec_layers = layers;
    cfg.osma.grid = v == Variant::dcx025_cred ? 2 : 1;
    cfg.osma.out_tokens = 1;
    cfg.osma_c = cfg.osma;
    cfg.osma_c.grid = 1;
    cfg.osma_c.out_tokens = 4;
    cfg.cram.channels = d_model;
    cfg.cram.num_layers = layers;
    cfg.cram.source_stage = 4;
    return cfg;
}

void ModelConfig::validate() const {
    detr.validate();
    if (!uses_cram(detr.variant)) return;
    osma.validate();
    cram.validate();
    if (cram.channels != detr.d_model) throw ValueError("cram.channels: must equal detr.d_model");
    if (cram.num_layers != detr.enc_layers) throw ValueError("cram.num_layers: must equal detr.enc_layers");
    if (detr.variant == Variant::oo_cred) {
        try {
            osma_c.validate();
        } catch (const ValueError& e) {
            throw ValueError("osma_c" + std::string(e.what()).substr(4));
        }
    } else if (osma.upscale() >= (std::size_t{1} << cram.pyramid_index()) * osma.grid) {
        throw ValueError("cram.source_stage: CRAM source must be finer than the encoder input");
    }
}

// --- parameters ------------------------------------------------------------

AttentionParams AttentionParams::init(std::size_t c, CounterRng& rng) {
    return {Linear::init(c, c, rng), Linear::init(c, c, rng, false), Linear::init(c, c, rng), Linear::init(c, c, rng)};
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    q.visit(prefix + ".q", fn);
    k.visit(prefix + ".k", fn);
    v.visit(prefix + ".v", fn);
    out.visit(prefix + ".out", fn);
}

void EncoderLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm1.visit(prefix + ".norm1", fn);
    attn.visit(prefix + ".attn", fn);
    norm2.visit(prefix + ".norm2", fn);
    ff1.visit(prefix + ".ff1", fn);
    ff2.visit(prefix + ".ff2", fn);
}

void DecoderLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    norm1.visit(prefix + ".norm1", fn);
    self_attn.visit(prefix + ".self_attn", fn);
    norm2.visit(prefix + ".norm2", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
    norm3.visit(prefix + ".norm3", fn);
    ff1.visit(prefix + ".ff1", fn);
    ff2.visit(prefix + ".ff2", fn);
}

void HeadParams::visit(const std::string& prefix, const ParamVisitor& fn) {
    cls.visit(prefix + ".cls", fn);
    box1.visit(prefix + ".box1", fn);
    box2.visit(prefix + ".box2", fn);
    box3.visit(prefix + ".box3", fn);
}

Params Params::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto& d = cfg.detr;
    const std::size_t c = d.d_model;
    Params p;

    CounterRng backbone_rng(seed, stream_id("backbone"));
    for (std::size_t s = 0; s < 5; ++s) {
        p.backbone.push_back(Linear::he_uniform((s == 0 ? kInputChannels : c) * 4, c, backbone_rng));
    }
    if (uses_cram(d.variant)) {
        CounterRng osma_rng(seed, stream_id("osma"));
        p.osma = osma::Params::init(cfg.osma, 3, c, osma_rng);
        if (d.variant == Variant::oo_cred) {
            CounterRng osma_c_rng(seed, stream_id("osma_c"));
            p.osma_c = osma::Params::init(cfg.osma_c, 3, c, osma_c_rng);
        }
        CounterRng cram_rng(seed, stream_id("cram"));
        p.cram = cram::Params::init(cfg.cram, cram_rng);
    }
    CounterRng enc_rng(seed, stream_id("encoder"));
    for (std::size_t i = 0; i < d.enc_layers; ++i) {
        EncoderLayerParams l{Norm::init(c), Norm::init(c), AttentionParams::init(c, enc_rng),
                             Linear::init(c, d.d_ff, enc_rng), Linear::init(d.d_ff, c, enc_rng)};
        p.encoder.push_back(std::move(l));
    }
    CounterRng dec_rng(seed, stream_id("decoder"));
    for (std::size_t i = 0; i < d.dec_layers; ++i) {
        DecoderLayerParams l{Norm::init(c),
                             Norm::init(c),
                             Norm::init(c),
                             AttentionParams::init(c, dec_rng),
                             AttentionParams::init(c, dec_rng),
                             Linear::init(c, d.d_ff, dec_rng),
                             Linear::init(d.d_ff, c, dec_rng)};
        p.decoder.push_back(std::move(l));
    }
    p.decoder_norm = Norm::init(c);
    CounterRng query_rng(seed, stream_id("queries"));
    std::vector<double> q(d.num_queries * c);
    for (auto& v : q) v = query_rng.normal();
    p.query_embed = Tensor::from({d.num_queries, c}, std::move(q), true);
    CounterRng head_rng(seed, stream_id("heads"));
    p.heads = {Linear::init(c, d.num_classes + 1, head_rng), Linear::init(c, c, head_rng),
               Linear::init(c, c, head_rng), Linear::init(c, 4, head_rng)};
    return p;
}

void Params::visit(const ModelConfig& cfg, const ParamVisitor& fn) {
    for (std::size_t s = 0; s < backbone.size(); ++s) backbone[s].visit("backbone.stage" + std::to_string(s), fn);
    if (uses_cram(cfg.detr.variant)) {
        osma.visit("osma", fn);
        if (cfg.detr.variant == Variant::oo_cred) osma_c.visit("osma_c", fn);
        cram.visit("cram", fn);
    }
    for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].visit("encoder.layer" + std::to_string(i), fn);
    for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].visit("decoder.layer" + std::to_string(i), fn);
    decoder_norm.visit("decoder.norm", fn);
    fn("query_embed", query_embed);
    heads.visit("heads", fn);
}

std::vector<Tensor> Params::tensors(const ModelConfig& cfg) {
    std::vector<Tensor> out;
    visit(cfg, [&](const std::string&, Tensor& t) { out.push_back(t); });
    return out;
}

// --- pipeline stages ------------------------------------------------------

FeaturePyramid toy_backbone(const Tensor& image, const std::vector<Linear>& stages) {
    if (image.rank() != 3 || image.extent(0) != kInputChannels) {
        throw ShapeError("toy_backbone: expected a [3,H,W] image, got " + shape_str(image.shape()));
    }
    if (image.extent(1) % 32 || image.extent(2) % 32) {
        throw ShapeError("toy_backbone: image extents " + shape_str(image.shape()) + " must be divisible by 32");
    }
    if (stages.size() != 5) throw ValueError("toy_backbone: expected 5 stages");
    std::vector<Tensor> outs;
    Tensor x = image;
    for (const auto& stage : stages) {
        x = ops::silu(stage(ops::space_to_depth(x, 2), 0));
        outs.push_back(x);
    }
    return {{outs[4], outs[3], outs[2]}, {32, 16, 8}};
}

Tensor sine_pos_embed(std::size_t height, std::size_t width, std::size_t channels) {
    if (channels == 0 || channels % 2) throw ValueError("sine_pos_embed: channel count must be even");
    if (height == 0 || width == 0) throw ShapeError("sine_pos_embed: extents must be positive");
    const std::size_t half = channels / 2;
    std::vector<double> out(channels * height * width);
    for (std::size_t k = 0; k < half; ++k) {
        const double dim_t = std::pow(10000.0, 2.0 * static_cast<double>(k / 2) / static_cast<double>(half));
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double ay = (static_cast<double>(y) + 1) / static_cast<double>(height) * 2 * std::numbers::pi;
                const double ax = (static_cast<double>(x) + 1) / static_cast<double>(width) * 2 * std::numbers::pi;
                out[(k * height + y) * width + x] = k % 2 == 0 ? std::sin(ay / dim_t) : std::cos(ay / dim_t);
                out[((k + half) * height + y) * width + x] = k % 2 == 0 ? std::sin(ax / dim_t) : std::cos(ax / dim_t);
            }
    }
    return Tensor::from({channels, height, width}, std::move(out));
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value, const AttentionParams& p,
                            std::size_t heads) {
    using namespace ops;
    if (query.rank() != 2 || key.rank() != 2 || key.shape() != value.shape() || query.extent(1) != key.extent(1)) {
        throw ShapeError("attention: incompatible query " + shape_str(query.shape()) + ", key " +
                         shape_str(key.shape()) + ", value " + shape_str(value.shape()));
    }
    const std::size_t c = query.extent(1);
    const std::size_t dh = c / heads;
    const Tensor q = scale(p.q(query, 1), 1.0 / std::sqrt(static_cast<double>(dh)));
    const Tensor k = p.k(key, 1);
    const Tensor v = p.v(value, 1);
    std::vector<Tensor> per_head;
    for (std::size_t h = 0; h < heads; ++h) {
        const Tensor qh = slice(q, 1, h * dh, (h + 1) * dh);
        const Tensor kh = slice(k, 1, h * dh, (h + 1) * dh);
        const Tensor vh = slice(v, 1, h * dh, (h + 1) * dh);
        const Tensor weights = softmax(matmul(qh, transpose(kh)), 1);
        per_head.push_back(matmul(weights, vh));
    }
    return p.out(concat(per_head, 1), 1);
}

std::vector<Tensor> encoder_forward(const Tensor& tokens, const Tensor& pos, const std::vector<EncoderLayerParams>& p,
                                    const Config& cfg) {
    using namespace ops;
    if (tokens.rank() != 2 || tokens.extent(1) != cfg.d_model || tokens.shape() != pos.shape()) {
        throw ShapeError("encoder: tokens " + shape_str(tokens.shape()) + " / positions " + shape_str(pos.shape()) +
                         " do not match d_model " + std::to_string(cfg.d_model));
    }
    if (p.size() != cfg.enc_layers) throw ValueError("encoder: parameter count does not match enc_layers");
    std::vector<Tensor> outs;
    Tensor x = tokens;
    for (const auto& layer : p) {
        const Tensor xn = layer.norm1(x, 1, cfg.eps);
        const Tensor qk = add(xn, pos);
        x = add(x, multi_head_attention(qk, qk, xn, layer.attn, cfg.heads));
        x = add(x, layer.ff2(relu(layer.ff1(layer.norm2(x, 1, cfg.eps), 1)), 1));
        outs.push_back(x);
    }
    return outs;
}

Tensor decoder_forward(const Tensor& memory, const Tensor& memory_pos, const Tensor& queries,
                       const std::vector<DecoderLayerParams>& p, const Norm& final_norm, const Config& cfg) {
    using namespace ops;
    if (memory.rank() != 2 || memory.extent(1) != cfg.d_model || memory.shape() != memory_pos.shape()) {
        throw ShapeError("decoder: memory " + shape_str(memory.shape()) + " / positions " +
                         shape_str(memory_pos.shape()) + " do not match d_model " + std::to_string(cfg.d_model));
    }
    if (queries.rank() != 2 || queries.extent(1) != cfg.d_model) {
        throw ShapeError("decoder: queries " + shape_str(queries.shape()) + " do not match d_model");
    }
    if (p.size() != cfg.dec_layers) throw ValueError("decoder: parameter count does not match dec_layers");
    const Tensor keys = add(memory, memory_pos);
    Tensor t = queries;
    for (const auto& layer : p) {
        Tensor tn = layer.norm1(t, 1, cfg.eps);
        const Tensor q = add(tn, queries);
        t = add(t, multi_head_attention(q, q, tn, layer.self_attn, cfg.heads));
        tn = layer.norm2(t, 1, cfg.eps);
        t = add(t, multi_head_attention(add(tn, queries), keys, memory, layer.cross_attn, cfg.heads));
        t = add(t, layer.ff2(relu(layer.ff1(layer.norm3(t, 1, cfg.eps), 1)), 1));
    }
    return final_norm(t, 1, cfg.eps);
}

Prediction predict_heads(const Tensor& decoded, const HeadParams& p) {
    using namespace ops;
    Tensor h = relu(p.box1(decoded, 1));
    h = relu(p.box2(h, 1));
    return {p.cls(decoded, 1), sigmoid(p.box3(h, 1))};
}

Prediction cred_detr_forward(const Tensor& image, const Params& params, const ModelConfig& cfg, ForwardTrace* trace) {
    using namespace ops;
    cfg.validate();
    const auto& d = cfg.detr;
    const FeaturePyramid pyramid = toy_backbone(image, params.backbone);

    Tensor encoder_map;
    switch (d.variant) {
        case Variant::baseline: {
            const Tensor& f5 = pyramid.levels[0];
            encoder_map = d.baseline_downsample == 1
                              ? f5
                              : bilinear_resize(f5, (f5.extent(1) + 1) / 2, (f5.extent(2) + 1) / 2);
            break;
        }
        case Variant::dc: encoder_map = pyramid.levels[1]; break;
        default: encoder_map = osma::forward(pyramid, params.osma, cfg.osma); break;
    }
    const std::size_t eh = encoder_map.extent(1), ew = encoder_map.extent(2);
    const Tensor enc_pos = to_tokens(sine_pos_embed(eh, ew, d.d_model));
    const auto encoded = encoder_forward(to_tokens(encoder_map), enc_pos, params.encoder, d);

    Tensor memory, memory_pos;
    std::size_t mh = eh, mw = ew;
    if (!uses_cram(d.variant)) {
        memory = encoded.back();
        memory_pos = enc_pos;
    } else {
        const cram::State initial =
            d.variant == Variant::oo_cred
                ? cram::init_from(osma::forward(pyramid, params.osma_c, cfg.osma_c), cfg.cram)
                : cram::init(pyramid, cfg.cram);
        std::vector<Tensor> maps;
        for (const auto& e : encoded) maps.push_back(from_tokens(e, eh, ew));
        const Tensor refined = cram::forward(initial, maps, params.cram, cfg.cram);
        mh = refined.extent(1);
        mw = refined.extent(2);
        memory = to_tokens(refined);
        memory_pos = d.decoder_positions ? to_tokens(sine_pos_embed(mh, mw, d.d_model))
                                         : Tensor::zeros(memory.shape());
    }
    if (trace) *trace = {eh, ew, mh, mw};
    const Tensor decoded = decoder_forward(memory, memory_pos, params.query_embed, params.decoder, params.decoder_norm, d);
    return predict_heads(decoded, params.heads);
}

// --- matching and loss ----------------------------------------------------

std::vector<std::size_t> hungarian_match(const Tensor& cost) {
    if (cost.rank() != 2) throw ShapeError("hungarian_match: cost must be [N_q, n_gt]");
    std::vector<double> c(cost.data().begin(), cost.data().end());
    return cred::hungarian_match(c, cost.extent(0), cost.extent(1));
}

std::vector<double> matching_cost(const Prediction& pred, const BoxSet& gt, const LossWeights& w) {
    const std::size_t nq = pred.class_logits.extent(0), k1 = pred.class_logits.extent(1), n = gt.size();
    std::vector<double> cost(nq * n);
    if (n == 0) return cost;
    auto logits = pred.class_logits.data();
    auto boxes = pred.boxes.data();
    for (std::size_t q = 0; q < nq; ++q) {
        double mx = logits[q * k1];
        for (std::size_t c = 1; c < k1; ++c) mx = std::max(mx, logits[q * k1 + c]);
        double z = 0;
        for (std::size_t c = 0; c < k1; ++c) z += std::exp(logits[q * k1 + c] - mx);
        const Box pb{boxes[q * 4], boxes[q * 4 + 1], boxes[q * 4 + 2], boxes[q * 4 + 3]};
        for (std::size_t g = 0; g < n; ++g) {
            const Box& gb = gt.boxes[g];
            const double prob = std::exp(logits[q * k1 + gt.labels[g]] - mx) / z;
            const double l1 = std::fabs(pb.cx - gb.cx) + std::fabs(pb.cy - gb.cy) + std::fabs(pb.w - gb.w) +
                              std::fabs(pb.h - gb.h);
            cost[q * n + g] = -w.cls * prob + w.l1 * l1 + w.giou * (1.0 - giou(pb, gb));
        }
    }
    return cost;
}

LossTerms set_loss(const Prediction& pred, const BoxSet& gt, const LossWeights& w) {
    using namespace ops;
    const std::size_t nq = pred.class_logits.extent(0), k1 = pred.class_logits.extent(1);
    gt.validate(k1 - 1);
    LossTerms terms;
    terms.assignment = cred::hungarian_match(matching_cost(pred, gt, w), nq, gt.size());

    std::vector<std::size_t> target(nq, k1 - 1);
    std::vector<double> weight(nq, w.no_object);
    for (std::size_t g = 0; g < gt.size(); ++g) {
        target[terms.assignment[g]] = gt.labels[g];
        weight[terms.assignment[g]] = 1.0;
    }
    double weight_sum = 0;
    std::vector<std::size_t> picks(nq);
    for (std::size_t q = 0; q < nq; ++q) {
        picks[q] = q * k1 + target[q];
        weight_sum += weight[q];
    }
    const Tensor picked = gather(log_softmax(pred.class_logits, 1), {nq}, picks, "pick_target");
    const Tensor ce = scale(sum(mul(picked, Tensor::from({nq}, weight))), -1.0 / weight_sum);
    terms.ce = ce.item();
    Tensor total = scale(ce, w.cls);

    if (gt.size() > 0) {
        const double n = static_cast<double>(gt.size());
        const Tensor matched = index_select(pred.boxes, 0, terms.assignment);
        const Tensor target_boxes = gt.as_tensor();
        const Tensor l1 = scale(sum(abs(sub(matched, target_boxes))), 1.0 / n);
        const Tensor giou_loss = scale(add_scalar(neg(sum(giou_rows(matched, target_boxes))), n), 1.0 / n);
        terms.l1 = l1.item();
        terms.giou = giou_loss.item();
        total = add(total, add(scale(l1, w.l1), scale(giou_loss, w.giou)));
    }
    terms.total = total;
    return terms;
}

}  // namespace cred::detr
