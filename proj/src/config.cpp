#include "cred/config.hpp"

#include <fstream>
#include <set>

namespace cred {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown field");
    }
}

template <class T>
void read(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(path + "." + key + ": wrong type");
    }
}

void read_size(const json& j, const std::string& path, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(path + "." + key + ": expected a non-negative integer");
    }
    out = v.get<std::size_t>();
}

void read_act(const json& j, const std::string& path, Activation& out) {
    if (!j.contains("act")) return;
    try {
        out = parse_activation(j.at("act").get<std::string>());
    } catch (const std::exception&) {
        throw ConfigError(path + ".act: expected one of silu, relu, identity");
    }
}

void parse_osma(const json& j, const std::string& path, osma::Config& cfg) {
    check_keys(j, path, {"g0", "P", "d", "depth", "norm", "act", "eps"});
    read_size(j, path, "g0", cfg.grid);
    read_size(j, path, "P", cfg.out_tokens);
    read_size(j, path, "d", cfg.latent);
    read_size(j, path, "depth", cfg.depth);
    read(j, path, "norm", cfg.norm_enabled);
    read(j, path, "eps", cfg.eps);
    read_act(j, path, cfg.act);
}

json osma_json(const osma::Config& c) {
    return {{"g0", c.grid}, {"P", c.out_tokens}, {"d", c.latent},   {"depth", c.depth},
            {"norm", c.norm_enabled}, {"act", to_string(c.act)}, {"eps", c.eps}};
}

// Re-raises component validation errors as ConfigError with a field path.
template <class F>
void guarded(const std::string& section, F&& f) {
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const ValueError& e) {
        const std::string msg = e.what();
        // Component validators already lead with "<section>.<field>:".
        throw ConfigError(msg.find(": ") != std::string::npos && msg.find('.') < msg.find(": ") ? msg
                                                                                              : section + ": " + msg);
    }
}

}  // namespace

void PipelineConfig::validate() const {
    guarded("detr", [&] { model.validate(); });
    if (data.image_h == 0 || data.image_h % 32) throw ConfigError("data.image_h: must be a positive multiple of 32");
    if (data.image_w == 0 || data.image_w % 32) throw ConfigError("data.image_w: must be a positive multiple of 32");
    if (data.num_images == 0) throw ConfigError("data.num_images: must be >= 1");
    if (!(train.lr >= 0)) throw ConfigError("train.lr: must be non-negative");
    if (!(train.momentum >= 0 && train.momentum < 1)) throw ConfigError("train.momentum: must be in [0, 1)");
    if (!(train.clip_norm >= 0)) throw ConfigError("train.clip_norm: must be non-negative");
    if (loss.cls < 0 || loss.l1 < 0 || loss.giou < 0 || loss.no_object <= 0) {
        throw ConfigError("loss: weights must be non-negative and no_object positive");
    }
}

PipelineConfig parse_config(const json& j) {
    check_keys(j, "", {"seed", "detr", "osma", "osma_c", "cram", "loss", "flops", "data", "train", "paths"});
    PipelineConfig cfg;
    read(j, "", "seed", cfg.seed);

    detr::Config d = cfg.model.detr;
    if (j.contains("detr")) {
        const auto& jd = j.at("detr");
        const std::string p = "detr";
        check_keys(jd, p, {"d_model", "heads", "enc_layers", "dec_layers", "d_ff", "num_queries", "num_classes",
                           "variant", "baseline_downsample", "decoder_positions"});
        read_size(jd, p, "d_model", d.d_model);
        read_size(jd, p, "heads", d.heads);
        read_size(jd, p, "enc_layers", d.enc_layers);
        read_size(jd, p, "dec_layers", d.dec_layers);
        read_size(jd, p, "d_ff", d.d_ff);
        read_size(jd, p, "num_queries", d.num_queries);
        read_size(jd, p, "num_classes", d.num_classes);
        read_size(jd, p, "baseline_downsample", d.baseline_downsample);
        read(jd, p, "decoder_positions", d.decoder_positions);
        if (jd.contains("variant")) {
            try {
                d.variant = detr::parse_variant(jd.at("variant").get<std::string>());
            } catch (const std::exception&) {
                throw ConfigError("detr.variant: expected one of baseline, dc, default, dcx025, oo");
            }
        }
    }
    cfg.model = detr::ModelConfig::preset(d.variant, d.d_model, d.enc_layers);
    cfg.model.detr = d;
    if (j.contains("osma")) parse_osma(j.at("osma"), "osma", cfg.model.osma);
    if (j.contains("osma_c")) parse_osma(j.at("osma_c"), "osma_c", cfg.model.osma_c);
    if (j.contains("cram")) {
        const auto& jc = j.at("cram");
        check_keys(jc, "cram", {"channels", "num_layers", "source_stage", "norm", "act", "eps"});
        read_size(jc, "cram", "channels", cfg.model.cram.channels);
        read_size(jc, "cram", "num_layers", cfg.model.cram.num_layers);
        read(jc, "cram", "source_stage", cfg.model.cram.source_stage);
        read(jc, "cram", "norm", cfg.model.cram.norm_enabled);
        read(jc, "cram", "eps", cfg.model.cram.eps);
        read_act(jc, "cram", cfg.model.cram.act);
    }
    if (j.contains("loss")) {
        const auto& jl = j.at("loss");
        check_keys(jl, "loss", {"cls", "l1", "giou", "no_object"});
        read(jl, "loss", "cls", cfg.loss.cls);
        read(jl, "loss", "l1", cfg.loss.l1);
        read(jl, "loss", "giou", cfg.loss.giou);
        read(jl, "loss", "no_object", cfg.loss.no_object);
    }
    if (j.contains("flops")) {
        const auto& jf = j.at("flops");
        check_keys(jf, "flops", {"macs_as_flops", "backbone_macs"});
        read(jf, "flops", "macs_as_flops", cfg.budget.convention.macs_as_flops);
        if (jf.contains("backbone_macs") && !jf.at("backbone_macs").is_null()) {
            if (!jf.at("backbone_macs").is_number() || jf.at("backbone_macs").get<double>() < 0) {
                throw ConfigError("flops.backbone_macs: expected a non-negative number");
            }
            cfg.budget.backbone_macs = static_cast<flops::Macs>(jf.at("backbone_macs").get<double>());
        }
    }
    if (j.contains("data")) {
        const auto& jd = j.at("data");
        check_keys(jd, "data", {"image_h", "image_w", "num_images"});
        read_size(jd, "data", "image_h", cfg.data.image_h);
        read_size(jd, "data", "image_w", cfg.data.image_w);
        read_size(jd, "data", "num_images", cfg.data.num_images);
    }
    if (j.contains("train")) {
        const auto& jt = j.at("train");
        check_keys(jt, "train", {"steps", "lr", "momentum", "clip_norm"});
        read_size(jt, "train", "steps", cfg.train.steps);
        read(jt, "train", "lr", cfg.train.lr);
        read(jt, "train", "momentum", cfg.train.momentum);
        read(jt, "train", "clip_norm", cfg.train.clip_norm);
    }
    if (j.contains("paths")) {
        const auto& jp = j.at("paths");
        check_keys(jp, "paths", {"goldens", "checkpoint", "metrics"});
        std::string s;
        if (jp.contains("goldens")) cfg.paths.goldens = jp.at("goldens").get<std::string>();
        if (jp.contains("checkpoint")) cfg.paths.checkpoint = jp.at("checkpoint").get<std::string>();
        if (jp.contains("metrics")) cfg.paths.metrics = jp.at("metrics").get<std::string>();
    }
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

json to_json(const PipelineConfig& cfg) {
    const auto& d = cfg.model.detr;
    const auto& c = cfg.model.cram;
    json j;
    j["seed"] = cfg.seed;
    j["detr"] = {{"d_model", d.d_model},
                 {"heads", d.heads},
                 {"enc_layers", d.enc_layers},
                 {"dec_layers", d.dec_layers},
                 {"d_ff", d.d_ff},
                 {"num_queries", d.num_queries},
                 {"num_classes", d.num_classes},
                 {"variant", detr::to_string(d.variant)},
                 {"baseline_downsample", d.baseline_downsample},
                 {"decoder_positions", d.decoder_positions}};
    j["osma"] = osma_json(cfg.model.osma);
    j["osma_c"] = osma_json(cfg.model.osma_c);
    j["cram"] = {{"channels", c.channels}, {"num_layers", c.num_layers}, {"source_stage", c.source_stage},
                 {"norm", c.norm_enabled}, {"act", to_string(c.act)},   {"eps", c.eps}};
    j["loss"] = {{"cls", cfg.loss.cls}, {"l1", cfg.loss.l1}, {"giou", cfg.loss.giou}, {"no_object", cfg.loss.no_object}};
    j["flops"] = {{"macs_as_flops", cfg.budget.convention.macs_as_flops},
                  {"backbone_macs", cfg.budget.backbone_macs ? json(*cfg.budget.backbone_macs) : json(nullptr)}};
    j["data"] = {{"image_h", cfg.data.image_h}, {"image_w", cfg.data.image_w}, {"num_images", cfg.data.num_images}};
    j["train"] = {{"steps", cfg.train.steps},
                  {"lr", cfg.train.lr},
                  {"momentum", cfg.train.momentum},
                  {"clip_norm", cfg.train.clip_norm}};
    j["paths"] = {{"goldens", cfg.paths.goldens.string()},
                  {"checkpoint", cfg.paths.checkpoint.string()},
                  {"metrics", cfg.paths.metrics.string()}};
    return j;
}

}  // namespace cred
