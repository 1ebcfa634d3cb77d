#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdfg/augment.hpp"
#include "mdfg/dataio.hpp"
#include "mdfg/features.hpp"
#include "mdfg/giniweight.hpp"
#include "mdfg/losses.hpp"
#include "mdfg/model.hpp"

namespace mdfg::trainer {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::size_t finetune_epochs = 20;
    double lr = 0.001;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    double alpha = 0.1;
    double temperature = 0.07;
    losses::SupConDenominator supcon_denominator = losses::SupConDenominator::all;
    std::uint64_t seed = 7;

    void validate() const;
};

// Momentum buffers, one per parameter entry, created on first use.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

/// v <- momentum*v + g + wd*w (wd on weights only); w <- w - lr*v. Frozen groups are skipped.
void sgd_step(model::ModelParams& params, const std::vector<tensor::Tensor>& grads, const TrainConfig& cfg, SgdState& state);

struct PretrainLogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double l_sup = 0.0;
    double l_align = 0.0;
    double l_total = 0.0;
};

struct FinetuneLogRow {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // batch accuracy before the update
};

struct PretrainResult {
    model::ModelParams params;
    std::vector<PretrainLogRow> log;
};

struct FinetuneResult {
    model::ModelParams params;
    std::vector<FinetuneLogRow> log;
};

/// Weighted, normalized shallow features of each (un-augmented) segment.
std::vector<features::FeatureArray> shallow_inputs(const std::vector<dataio::EchoSegment>& data,
                                                   const features::ReferenceStats& ref,
                                                   const gini::FeatureWeights& weights,
                                                   const features::FeatureConfig& fcfg);

/// Contrastive pre-training of encoder, head and alignment matrices. `shallow[i]` belongs to `data[i]`.
/// The alignment matrices stay frozen when alpha == 0 and the classifier always is.
PretrainResult pretrain(const std::vector<dataio::EchoSegment>& data, const std::vector<features::FeatureArray>& shallow,
                        model::ModelParams init, const TrainConfig& cfg, const augment::AugmentConfig& aug);

PretrainResult pretrain(const std::vector<dataio::EchoSegment>& data, const TrainConfig& cfg,
                        const features::ReferenceStats& ref, const gini::FeatureWeights& weights,
                        const features::FeatureConfig& fcfg, const augment::AugmentConfig& aug,
                        const model::ModelConfig& mcfg);

/// Freezes encoder and alignment groups, trains head + classifier with cross-entropy
/// on the un-augmented segments.
FinetuneResult finetune(model::ModelParams params, const std::vector<dataio::EchoSegment>& data, const TrainConfig& cfg);

/// (B, N) modulus matrix of a set of segments.
tensor::Tensor modulus_batch(const std::vector<const dataio::EchoSegment*>& segs);

std::string pretrain_log_csv(const std::vector<PretrainLogRow>& log);
std::string finetune_log_csv(const std::vector<FinetuneLogRow>& log);

}  // namespace mdfg::trainer
