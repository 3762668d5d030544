#pragma once

#include "cred/detr.hpp"
#include "cred/flops.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace cred {

// Rejected configuration; the message starts with the offending field path.
struct ConfigError : ValueError {
    using ValueError::ValueError;
};

struct DataConfig {
    std::size_t image_h = 64;
    std::size_t image_w = 64;
    std::size_t num_images = 16;
};

struct TrainConfig {
    std::size_t steps = 200;
    double lr = 0.05;
    double momentum = 0.9;
    double clip_norm = 1.0;
};

struct Paths {
    std::filesystem::path goldens = "goldens";
    std::filesystem::path checkpoint = "checkpoint";
    std::filesystem::path metrics = "metrics.jsonl";
};

struct PipelineConfig {
    detr::ModelConfig model = detr::ModelConfig::preset(detr::Variant::default_cred, 32, 2);
    detr::LossWeights loss;
    flops::BudgetOptions budget;
    DataConfig data;
    TrainConfig train;
    Paths paths;
    std::uint64_t seed = 7;

    // Cross-module consistency; throws ConfigError naming a field.
    void validate() const;
};

// Missing fields keep their defaults; unknown fields are rejected. The
// variant preset is applied first, explicit osma/osma_c/cram fields after.
PipelineConfig parse_config(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

}  // namespace cred
