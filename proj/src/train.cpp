#include "cred/train.hpp"

#include "cred/crt1.hpp"
#include "cred/hungarian.hpp"
#include "cred/ops.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace cred::train {

StepMetrics train_step(std::span<const synth::ShapesSample> batch, detr::Params& params, const detr::ModelConfig& cfg,
                       OptimizerState& state, double lr, const detr::LossWeights& weights) {
    if (batch.empty()) throw ValueError("train_step: empty batch");
    StepMetrics m;
    std::vector<Tensor> losses;
    double iou_sum = 0;
    for (const auto& sample : batch) {
        const auto pred = detr::cred_detr_forward(sample.image, params, cfg);
        auto terms = detr::set_loss(pred, sample.gt, weights);
        losses.push_back(terms.total);
        m.ce += terms.ce;
        m.l1 += terms.l1;
        m.giou += terms.giou;
        auto boxes = pred.boxes.data();
        for (std::size_t g = 0; g < sample.gt.size(); ++g) {
            const std::size_t q = terms.assignment[g];
            iou_sum += iou({boxes[q * 4], boxes[q * 4 + 1], boxes[q * 4 + 2], boxes[q * 4 + 3]}, sample.gt.boxes[g]);
            ++m.matched;
        }
    }
    const double n = static_cast<double>(batch.size());
    const Tensor loss = ops::scale(ops::sum(ops::concat(losses, 0)), 1.0 / n);
    m.loss = loss.item();
    m.ce /= n;
    m.l1 /= n;
    m.giou /= n;
    m.mean_matched_iou = m.matched ? iou_sum / static_cast<double>(m.matched) : 0.0;
    if (!std::isfinite(m.loss)) throw NonFiniteError("train_step: non-finite loss " + metrics_record(m));

    auto tensors = params.tensors(cfg);
    for (auto& t : tensors) t.zero_grad();
    loss.backward();

    double norm2 = 0;
    for (const auto& t : tensors) {
        if (!t.has_grad()) continue;
        for (double g : t.grad()) norm2 += g * g;
    }
    m.grad_norm = std::sqrt(norm2);
    const double clip = state.clip_norm > 0 && m.grad_norm > state.clip_norm ? state.clip_norm / m.grad_norm : 1.0;

    if (state.velocity.size() != tensors.size()) {
        state.velocity.clear();
        for (const auto& t : tensors) state.velocity.emplace_back(t.size(), 0.0);
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!tensors[i].has_grad()) continue;
        auto g = tensors[i].grad();
        auto& v = state.velocity[i];
        auto p = tensors[i].mutable_data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = state.momentum * v[k] + clip * g[k];
            p[k] -= lr * v[k];
        }
    }
    return m;
}

ToyResult train_toy(std::span<const synth::ShapesSample> data, detr::Params& params, const detr::ModelConfig& cfg,
                    const ToyOptions& options, const detr::LossWeights& weights,
                    const std::function<void(const StepMetrics&)>& on_step) {
    OptimizerState state;
    state.momentum = options.momentum;
    state.clip_norm = options.clip_norm;
    ToyResult result;
    for (std::size_t s = 1; s <= options.steps; ++s) {
        auto m = train_step(data, params, cfg, state, options.lr, weights);
        m.step = s;
        result.history.push_back(m);
        if (on_step) on_step(m);
    }
    return result;
}

double recall_at_iou(std::span<const synth::ShapesSample> samples, const detr::Params& params,
                     const detr::ModelConfig& cfg, double threshold, const detr::LossWeights& weights) {
    NoGradGuard no_grad;
    std::size_t total = 0, hit = 0;
    for (const auto& s : samples) {
        if (s.gt.size() == 0) continue;
        const auto pred = detr::cred_detr_forward(s.image, params, cfg);
        const auto assignment = cred::hungarian_match(detr::matching_cost(pred, s.gt, weights),
                                                pred.class_logits.extent(0), s.gt.size());
        auto logits = pred.class_logits.data();
        auto boxes = pred.boxes.data();
        const std::size_t k1 = pred.class_logits.extent(1);
        for (std::size_t g = 0; g < s.gt.size(); ++g) {
            const std::size_t q = assignment[g];
            std::size_t best = 0;
            for (std::size_t c = 1; c < k1; ++c) {
                if (logits[q * k1 + c] > logits[q * k1 + best]) best = c;
            }
            const Box pb{boxes[q * 4], boxes[q * 4 + 1], boxes[q * 4 + 2], boxes[q * 4 + 3]};
            ++total;
            if (best == s.gt.labels[g] && iou(pb, s.gt.boxes[g]) >= threshold) ++hit;
        }
    }
    return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

std::string metrics_record(const StepMetrics& m) {
    nlohmann::json j;
    j["step"] = m.step;
    j["loss"] = m.loss;
    j["ce"] = m.ce;
    j["l1"] = m.l1;
    j["giou"] = m.giou;
    j["matched"] = m.matched;
    j["mean_matched_iou"] = m.mean_matched_iou;
    j["grad_norm"] = m.grad_norm;
    return j.dump();
}

void save_checkpoint(const std::filesystem::path& dir, detr::Params& params, const detr::ModelConfig& cfg) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["variant"] = detr::to_string(cfg.detr.variant);
    manifest["tensors"] = nlohmann::json::array();
    std::size_t i = 0;
    params.visit(cfg, [&](const std::string& name, Tensor& t) {
        const std::string file = "t" + std::to_string(i++) + ".crt1";
        crt1::save(dir / file, t);
        manifest["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"file", file}});
    });
    std::ofstream os(dir / "manifest.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw Error("save_checkpoint: cannot write manifest in " + dir.string());
}

void load_checkpoint(const std::filesystem::path& dir, detr::Params& params, const detr::ModelConfig& cfg) {
    std::ifstream is(dir / "manifest.json");
    if (!is) throw Error("load_checkpoint: no manifest.json in " + dir.string());
    const auto manifest = nlohmann::json::parse(is);
    std::map<std::string, std::pair<Shape, std::string>> entries;
    for (const auto& e : manifest.at("tensors")) {
        entries[e.at("name").get<std::string>()] = {e.at("shape").get<Shape>(), e.at("file").get<std::string>()};
    }
    params.visit(cfg, [&](const std::string& name, Tensor& t) {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("load_checkpoint: missing tensor " + name);
        if (it->second.first != t.shape()) throw Error("load_checkpoint: shape mismatch for " + name);
        const Tensor loaded = crt1::load(dir / it->second.second);
        t = Tensor::from(loaded.shape(), {loaded.data().begin(), loaded.data().end()}, true);
    });
}

}  // namespace cred::train
