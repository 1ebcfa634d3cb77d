#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mdfg/features.hpp"

namespace mdfg::gini {

struct GiniSplitEval {
    std::size_t feature_index = 0;
    double threshold = 0.0;
    double gini_d = 0.0;   // parent impurity
    double gini_da = 0.0;  // weighted child impurity of the chosen split
    double delta = 0.0;    // gini_d - gini_da
};

struct FeatureWeights {
    features::FeatureArray w{};
};

enum class Weighting { proportional, rank };

Weighting parse_weighting(const std::string& s);
const char* to_string(Weighting w);

// 1 - sum_k (n_k / n)^2
double gini_impurity(std::span<const int> labels);

/// Binary CART partition {v <= threshold}, {v > threshold}; sum_v |D_v|/|D| * impurity(D_v).
double gini_index_split(std::span<const double> values, std::span<const int> labels, double threshold);

/// Best ΔGini over midpoints of consecutive distinct sorted values; ties keep the smallest threshold.
/// A constant feature gives delta 0 with the constant as threshold.
GiniSplitEval best_delta_gini(std::span<const double> values, std::span<const int> labels,
                              std::size_t feature_index = 0);

FeatureWeights feature_weights(std::span<const GiniSplitEval> evals, Weighting mode = Weighting::proportional);

features::FeatureArray apply_weights(const features::ShallowFeatureVector& f, const FeatureWeights& w);

// Evaluates all six columns of a labeled feature table.
std::vector<GiniSplitEval> evaluate_features(const std::vector<features::FeatureArray>& rows,
                                             std::span<const int> labels);

std::string weights_report_json(std::span<const GiniSplitEval> evals, const FeatureWeights& w, Weighting mode);
FeatureWeights weights_from_report_json(const std::string& text);

}  // namespace mdfg::gini
