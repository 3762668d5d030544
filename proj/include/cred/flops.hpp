#pragma once

#include "cred/detr.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Analytic multiply-accumulate (MAC) counts for every pipeline component.
// Only matrix products are counted (projections, attention scores and
// their application, FFNs, 1x1 projections) plus 4 MACs per output element
// of a bilinear resize. Softmax, normalization and activations are ignored.
namespace cred::flops {

using Macs = std::uint64_t;

struct Convention {
    bool macs_as_flops = true;  // false reports 2 FLOPs per MAC
    double flops(Macs macs) const { return static_cast<double>(macs) * (macs_as_flops ? 1.0 : 2.0); }
};

// Q and output projections over n_q tokens, K and V projections over n_kv
// tokens, and 2 * n_q * n_kv * width for scores and their application.
// The head count does not change the total.
Macs attention_flops(std::size_t n_q, std::size_t n_kv, std::size_t width, std::size_t heads = 1);

Macs encoder_flops(std::size_t n_tokens, const detr::Config& cfg);
Macs decoder_flops(std::size_t n_tokens, const detr::Config& cfg);

// Per layer: the 2C -> C projection over H*W positions, plus the bilinear
// upsampling of the encoder output when `resize` is set.
Macs cram_flops(std::size_t height, std::size_t width, const cram::Config& cfg, bool resize = true);

// Coarsest map h0 x w0 before alignment, n_levels inputs of `channels`.
// Includes the alignment resize of every level whose size changes.
Macs osma_flops(std::size_t h0, std::size_t w0, std::size_t n_levels, std::size_t channels, const osma::Config& cfg);

// The five-stage toy backbone on an H x W image.
Macs toy_backbone_flops(std::size_t height, std::size_t width, std::size_t channels);

struct BudgetOptions {
    Convention convention;
    // Fixed backbone cost (e.g. a published ResNet figure); the toy backbone
    // is counted when absent.
    std::optional<Macs> backbone_macs;
};

struct FlopBudget {
    Macs backbone = 0, encoder = 0, decoder = 0, cram = 0, osma = 0;
    std::size_t height = 0, width = 0;
    detr::Variant variant = detr::Variant::baseline;
    std::size_t encoder_tokens = 0, decoder_tokens = 0;
    double r = 1.0;  // decoder / encoder resolution ratio (per side)
    Convention convention;

    Macs total() const { return backbone + encoder + decoder + cram + osma; }
    Macs transformer_side() const { return encoder + decoder + cram + osma; }
};

FlopBudget budget_report(const detr::ModelConfig& cfg, std::size_t height, std::size_t width,
                         const BudgetOptions& options = {});

struct BudgetRow {
    std::string component;
    Macs macs;
    double flops;
    double share;  // percent of total
};
std::vector<BudgetRow> rows(const FlopBudget& b);

// Aligned text table and CSV (component,MACs,FLOPs,share%).
std::string format_table(const FlopBudget& b);
std::string format_csv(const std::vector<FlopBudget>& budgets);

}  // namespace cred::flops
