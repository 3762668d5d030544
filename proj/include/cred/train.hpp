#pragma once

#include "cred/detr.hpp"
#include "cred/synth.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cred::train {

// Heavy-ball momentum: v <- mu * v + g ; p <- p - lr * v.
struct OptimizerState {
    double momentum = 0.9;
    double clip_norm = 0.0;  // global gradient-norm clip, 0 disables
    std::vector<std::vector<double>> velocity;
};

struct StepMetrics {
    std::size_t step = 0;
    double loss = 0, ce = 0, l1 = 0, giou = 0;
    std::size_t matched = 0;  // matched (gt, query) pairs in the batch
    double mean_matched_iou = 0;
    double grad_norm = 0;
};

// Mean set loss over the batch, one backward pass, one momentum update.
// Throws NonFiniteError (with the step diagnostic) if the loss is not finite.
StepMetrics train_step(std::span<const synth::ShapesSample> batch, detr::Params& params, const detr::ModelConfig& cfg,
                       OptimizerState& state, double lr, const detr::LossWeights& weights = {});

struct ToyOptions {
    std::size_t steps = 200;
    double lr = 0.05;
    double momentum = 0.9;
    double clip_norm = 1.0;
};

struct ToyResult {
    std::vector<StepMetrics> history;  // one entry per step, step numbers from 1
    double loss_at(std::size_t step) const { return history.at(step - 1).loss; }
    double final_loss() const { return history.empty() ? 0.0 : history.back().loss; }
};

// Full-batch training over `data` at a constant learning rate.
ToyResult train_toy(std::span<const synth::ShapesSample> data, detr::Params& params, const detr::ModelConfig& cfg,
                    const ToyOptions& options, const detr::LossWeights& weights = {},
                    const std::function<void(const StepMetrics&)>& on_step = {});

// Fraction of ground-truth boxes whose Hungarian-matched query predicts the
// right class (argmax over all K+1 logits) with IoU >= threshold.
double recall_at_iou(std::span<const synth::ShapesSample> samples, const detr::Params& params,
                     const detr::ModelConfig& cfg, double threshold = 0.5, const detr::LossWeights& weights = {});

// One JSON object per line: step, loss, component losses, matched pairs.
std::string metrics_record(const StepMetrics& m);

// Checkpoint: one CRT1 file per tensor plus manifest.json listing
// names, shapes and files.
void save_checkpoint(const std::filesystem::path& dir, detr::Params& params, const detr::ModelConfig& cfg);
void load_checkpoint(const std::filesystem::path& dir, detr::Params& params, const detr::ModelConfig& cfg);

}  // namespace cred::train
