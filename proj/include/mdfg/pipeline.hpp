#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdfg/config.hpp"
#include "mdfg/detector.hpp"

// Stages shared by the command-line tool and the end-to-end checks.
namespace mdfg::pipeline {

namespace fs = std::filesystem;

/// One series per range cell; primary cells carry the target, secondary cells a weaker copy.
std::vector<dataio::ComplexSeries> synthesize(const config::RunConfig& cfg);

struct Dataset {
    std::vector<dataio::EchoSegment> segments;  // cells in file order, starts ascending
    dataio::SplitSpec split;
    std::size_t stride_target = 0;
};

Dataset build_dataset(const std::vector<dataio::ComplexSeries>& cells, const config::RunConfig& cfg);

std::vector<dataio::EchoSegment> select(const std::vector<dataio::EchoSegment>& segs, const std::vector<std::size_t>& ids);

struct FeatureTable {
    features::ReferenceStats ref;
    std::vector<features::FeatureArray> raw;         // one row per segment
    std::vector<features::FeatureArray> normalized;
};

/// Reference statistics come from the clutter segments of the pretrain split.
FeatureTable extract_features(const Dataset& ds, const features::FeatureConfig& fcfg);

struct GiniResult {
    std::vector<gini::GiniSplitEval> evals;
    gini::FeatureWeights weights;
};

GiniResult weigh_features(const Dataset& ds, const FeatureTable& table, gini::Weighting mode);

struct Evaluation {
    detector::DetectionThreshold threshold;
    detector::ConfusionMatrix confusion;
    detector::MetricsReport metrics;
    std::vector<double> val_scores;
    std::vector<double> test_scores;
};

Evaluation calibrate_and_evaluate(const model::ModelParams& params, const Dataset& ds, double preset_pfa);

struct RunResult {
    trainer::PretrainResult pretrained;
    trainer::FinetuneResult finetuned;
    Evaluation eval;
};

/// pretrain -> finetune -> calibrate -> evaluate with `cfg.train` as given.
RunResult train_and_evaluate(const config::RunConfig& cfg, const Dataset& ds, const FeatureTable& table,
                             const gini::FeatureWeights& weights);

// Artifact (de)serialization.
std::string reference_to_json(const features::ReferenceStats& ref);
features::ReferenceStats reference_from_json(const std::string& text);
std::string features_csv(const Dataset& ds, const FeatureTable& table);
FeatureTable features_from_csv(const std::string& text, std::size_t n_segments, const features::ReferenceStats& ref);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

// File names inside the output directory.
namespace artifact {
inline constexpr const char* config = "run_config.ini";
inline constexpr const char* scenario = "scenario.rds";
inline constexpr const char* splits = "splits.json";
inline constexpr const char* reference = "reference.json";
inline constexpr const char* features = "features.csv";
inline constexpr const char* weights = "gini_weights.json";
inline constexpr const char* pretrained = "pretrained.ckpt";
inline constexpr const char* pretrain_log = "pretrain_log.csv";
inline constexpr const char* finetuned = "finetuned.ckpt";
inline constexpr const char* finetune_log = "finetune_log.csv";
inline constexpr const char* threshold = "threshold.json";
inline constexpr const char* val_scores = "val_scores.csv";
inline constexpr const char* report = "evaluation.json";
inline constexpr const char* test_scores = "test_scores.csv";
inline constexpr const char* ablation = "ablation.csv";
}  // namespace artifact

// Each stage reads its inputs from and writes its outputs to `out`.
void stage_synth(const config::RunConfig& cfg, const fs::path& out);
void stage_features(const config::RunConfig& cfg, const fs::path& out);
void stage_gini(const config::RunConfig& cfg, const fs::path& out);
void stage_pretrain(const config::RunConfig& cfg, const fs::path& out);
void stage_finetune(const config::RunConfig& cfg, const fs::path& out);
void stage_calibrate(const config::RunConfig& cfg, const fs::path& out);
void stage_evaluate(const config::RunConfig& cfg, const fs::path& out);
void stage_ablate(const config::RunConfig& cfg, const fs::path& out);
void run_all(const config::RunConfig& cfg, const fs::path& out);

/// alpha,tp,fn,fp,tn,accuracy,precision,recall_pd,true_pfa,miou,threshold
std::string ablation_header();
std::string ablation_row(double alpha, const Evaluation& e);

}  // namespace mdfg::pipeline
