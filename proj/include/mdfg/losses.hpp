#pragma once

#include <span>
#include <string>
#include <vector>

#include "mdfg/tensor.hpp"

namespace mdfg::losses {

// Index set of the contrastive softmax denominator.
enum class SupConDenominator { all, negatives_only };

SupConDenominator parse_denominator(const std::string& s);
const char* to_string(SupConDenominator d);

struct ContrastBatch {
    tensor::Tensor z;          // B x p, normalized inside the loss
    std::vector<int> labels;   // B class ids
    double temperature = 0.07;
};

struct AlignBatch {
    tensor::Tensor s;  // N x m unit rows
    tensor::Tensor d;  // N x m unit rows, row i pairs with s row i
};

struct LossReport {
    double l_sup = 0.0;
    double l_align = 0.0;
    double alpha = 0.0;
    double l_total = 0.0;
};

/// Supervised contrastive loss, summed over anchors:
///   -sum_i 1/|P_i| sum_{p in P_i} log( exp(z_i.z_p/t) / sum_{a in A_i} exp(z_i.z_a/t) )
/// Rows of z are L2-normalized first. A_i is every a != i, or only the other-class
/// samples for `negatives_only`. Anchors without positives (or without any denominator
/// term) contribute 0; if none contribute the batch is degenerate.
tensor::Var sup_con_loss(tensor::Var z, std::span<const int> labels, double temperature,
                         SupConDenominator denom = SupConDenominator::all);
double sup_con_loss(const ContrastBatch& batch, SupConDenominator denom = SupConDenominator::all);

/// Symmetric shallow/deep matching loss over the similarity matrix M = S D^T (no temperature).
tensor::Var align_loss(tensor::Var s, tensor::Var d);
double align_loss(const AlignBatch& batch);

LossReport total_loss(double l_sup, double l_align, double alpha);

// Mean over the batch of -log softmax(logits)[label].
tensor::Var cross_entropy(tensor::Var logits, std::span<const int> labels);
double cross_entropy(const tensor::Tensor& logits, std::span<const int> labels);

}  // namespace mdfg::losses
