#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mdfg/dataio.hpp"
#include "mdfg/model.hpp"

namespace mdfg::detector {

struct DetectionThreshold {
    double threshold = 0.0;
    double preset_pfa = 0.01;
    std::size_t n_calibration = 0;
};

// Positive class is target.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fn + fp + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall_pd = 0.0;
    double true_pfa = 0.0;
    double miou = 0.0;
};

/// Target-class softmax probability of a two-logit row.
double target_probability(double logit_clutter, double logit_target);

double score(const model::ModelParams& params, const dataio::EchoSegment& seg);
std::vector<double> score_batch(const model::ModelParams& params, const std::vector<dataio::EchoSegment>& segs);

/// Distribution-free threshold: exactly floor(pfa*M) calibration scores exceed it when
/// the order statistics around the cut are distinct (at most that many otherwise).
DetectionThreshold calibrate_threshold(std::span<const double> clutter_scores, double preset_pfa);

inline Label decide(double score, const DetectionThreshold& th) {
    return score > th.threshold ? Label::target : Label::clutter;
}
std::vector<Label> decide_all(std::span<const double> scores, const DetectionThreshold& th);

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> decisions);

// Each ratio is formed from exact integer numerator and denominator, divided once.
MetricsReport metrics(const ConfusionMatrix& cm);

std::string threshold_to_json(const DetectionThreshold& th);
DetectionThreshold threshold_from_json(const std::string& text);

std::string evaluation_report_json(const DetectionThreshold& th, const ConfusionMatrix& cm, const MetricsReport& m);

/// index,source_cell,start_index,label,score,decision
std::string scores_csv(const std::vector<dataio::EchoSegment>& segs, std::span<const double> scores,
                       const DetectionThreshold& th);

}  // namespace mdfg::detector
