#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdfg/augment.hpp"
#include "mdfg/dataio.hpp"
#include "mdfg/features.hpp"
#include "mdfg/giniweight.hpp"
#include "mdfg/model.hpp"
#include "mdfg/synthgen.hpp"
#include "mdfg/trainer.hpp"

namespace mdfg::config {

struct DataSection {
    dataio::SegmentationConfig segmentation;
    std::size_t target_segments = 2000;  // 0 keeps stride_target as given
    std::uint64_t split_seed = 11;
};

struct SynthSection {
    std::size_t n_cells = 14;
    std::size_t samples_per_cell = 131072;
    double prf_hz = 1000.0;
    std::vector<std::size_t> primary_cells{7};
    std::vector<std::size_t> secondary_cells{6, 8, 9};
    synthgen::ClutterConfig clutter;
    synthgen::TargetConfig target;
};

struct GiniSection {
    gini::Weighting weighting = gini::Weighting::proportional;
};

struct DetectSection {
    double preset_pfa = 0.01;
};

struct RunConfig {
    DataSection data;
    SynthSection synth;
    features::FeatureConfig features;
    GiniSection gini;
    augment::AugmentConfig augment;
    model::ModelConfig model;
    trainer::TrainConfig train;
    std::vector<double> alpha_sweep{0.0, 0.1, 0.3, 1.0};
    DetectSection detect;

    void validate() const;

    /// Replaces every seed in the file with one derived from `seed`.
    void apply_seed(std::uint64_t seed);
};

/// INI text with sections [data] [synth] [features] [gini] [augment] [model] [train] [detect].
/// Missing keys keep their defaults; unknown sections or keys are ConfigError.
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);

// Full round-trippable dump of every field.
std::string to_ini(const RunConfig& cfg);

}  // namespace mdfg::config
