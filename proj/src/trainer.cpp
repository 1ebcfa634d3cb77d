#include "mdfg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mdfg/parallel.hpp"

namespace mdfg::trainer {

using model::Group;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;
namespace ts = mdfg::tensor;

void TrainConfig::validate() const {
    if (batch_size < 2) throw Error(ErrorCode::ConfigError, "batch_size must be >= 2");
    if (!(lr > 0.0)) throw Error(ErrorCode::ConfigError, "lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::ConfigError, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(ErrorCode::ConfigError, "weight_decay must be >= 0");
    if (!(alpha >= 0.0)) throw Error(ErrorCode::ConfigError, "alpha must be >= 0");
    if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigError, "temperature must be > 0");
}

void sgd_step(model::ModelParams& params, const std::vector<Tensor>& grads, const TrainConfig& cfg, SgdState& state) {
    if (grads.size() != params.entries.size()) {
        throw Error(ErrorCode::ShapeMismatch, fmt::format("{} gradients for {} parameters", grads.size(), params.entries.size()));
    }
    if (state.velocity.size() != params.entries.size()) {
        state.velocity.assign(params.entries.size(), {});
        for (std::size_t i = 0; i < params.entries.size(); ++i) state.velocity[i].assign(params.entries[i].value.size(), 0.0);
    }
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
        auto& e = params.entries[i];
        if (params.is_frozen(e.group)) continue;
        if (grads[i].size() != e.value.size()) {
            throw Error(ErrorCode::ShapeMismatch, "gradient shape for '" + e.name + "' is " + ts::shape_str(grads[i].shape));
        }
        const double wd = e.is_bias ? 0.0 : cfg.weight_decay;
        auto& v = state.velocity[i];
        auto& w = e.value.data;
        for (std::size_t k = 0; k < w.size(); ++k) {
            v[k] = cfg.momentum * v[k] + grads[i].data[k] + wd * w[k];
            w[k] -= cfg.lr * v[k];
        }
    }
}

namespace {

// Equal halves from each class per batch, each class list cycling through fresh shuffles.
class BalancedSampler {
public:
    BalancedSampler(const std::vector<dataio::EchoSegment>& data, std::size_t batch_size, std::uint64_t seed)
        : rng_(seed), batch_(batch_size) {
        for (std::size_t i = 0; i < data.size(); ++i) pools_[static_cast<int>(data[i].label)].push_back(i);
        if (pools_[0].empty() || pools_[1].empty()) {
            throw Error(ErrorCode::DegenerateBatch, "class-balanced batches need both clutter and target segments");
        }
        for (int c = 0; c < 2; ++c) std::shuffle(pools_[c].begin(), pools_[c].end(), rng_);
    }

    std::size_t batches_per_epoch(std::size_t n) const { return (n + batch_ - 1) / batch_; }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        const std::size_t n_target = batch_ / 2;
        draw(1, n_target, out);
        draw(0, batch_ - n_target, out);
        return out;
    }

private:
    void draw(int c, std::size_t k, std::vector<std::size_t>& out) {
        for (std::size_t i = 0; i < k; ++i) {
            if (cursor_[c] == pools_[c].size()) {
                std::shuffle(pools_[c].begin(), pools_[c].end(), rng_);
                cursor_[c] = 0;
            }
            out.push_back(pools_[c][cursor_[c]++]);
        }
    }

    std::mt19937_64 rng_;
    std::size_t batch_;
    std::vector<std::size_t> pools_[2];
    std::size_t cursor_[2] = {0, 0};
};

bool all_finite(double v) { return std::isfinite(v); }

}  // namespace

Tensor modulus_batch(const std::vector<const dataio::EchoSegment*>& segs) {
    if (segs.empty()) throw Error(ErrorCode::EmptySet, "empty segment batch");
    const std::size_t n = segs.front()->samples.size();
    Tensor out(Shape{segs.size(), n});
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segs[i]->samples.size() != n) throw Error(ErrorCode::ShapeMismatch, "segments in a batch must share one length");
        const RVec m = augment::modulus(segs[i]->samples);
        std::copy(m.begin(), m.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return out;
}

std::vector<features::FeatureArray> shallow_inputs(const std::vector<dataio::EchoSegment>& data,
                                                   const features::ReferenceStats& ref,
                                                   const gini::FeatureWeights& weights,
                                                   const features::FeatureConfig& fcfg) {
    std::vector<features::FeatureArray> out(data.size());
    parallel_for(data.size(), [&](std::size_t i) {
        out[i] = gini::apply_weights(features::extract_shallow(data[i].samples, ref, fcfg), weights);
    });
    return out;
}

PretrainResult pretrain(const std::vector<dataio::EchoSegment>& data, const std::vector<features::FeatureArray>& shallow,
                        model::ModelParams params, const TrainConfig& cfg, const augment::AugmentConfig& aug) {
    cfg.validate();
    aug.validate();
    if (shallow.size() != data.size()) {
        throw Error(ErrorCode::LengthMismatch, fmt::format("{} segments vs {} shallow feature rows", data.size(), shallow.size()));
    }
    const auto& mcfg = params.config;
    params.set_frozen(Group::encoder, false);
    params.set_frozen(Group::head, false);
    params.set_frozen(Group::align, cfg.alpha == 0.0);
    params.set_frozen(Group::classifier, true);

    BalancedSampler sampler(data, cfg.batch_size, mix_seed(cfg.seed, 0xba7c));
    const std::size_t steps = sampler.batches_per_epoch(data.size());
    const std::size_t views = aug.views_per_sample;
    const std::size_t n = mcfg.seg_len;

    for (const auto& seg : data) {
        if (seg.samples.size() != n) {
            throw Error(ErrorCode::ShapeMismatch, fmt::format("segment length {} != seg_len {}", seg.samples.size(), n));
        }
    }

    PretrainResult result;
    SgdState state;
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t step = 0; step < steps; ++step, ++global_step) {
            const auto idx = sampler.next();
            const std::size_t b = idx.size();
            Tensor x(Shape{views * b, n});
            std::vector<int> labels(views * b);
            Tensor fs(Shape{b, features::kNumFeatures});
            std::vector<std::size_t> source(views * b);
            parallel_for(b, [&](std::size_t j) {
                const auto& seg = data[idx[j]];
                const auto vs = augment::make_views(seg.samples, aug, mix_seed(cfg.seed, global_step, j));
                for (std::size_t v = 0; v < views; ++v) {
                    const RVec m = augment::modulus(vs[v].samples);
                    std::copy(m.begin(), m.end(), x.data.begin() + static_cast<std::ptrdiff_t>((v * b + j) * n));
                    labels[v * b + j] = static_cast<int>(seg.label);
                    source[v * b + j] = j;
                }
                std::copy(shallow[idx[j]].begin(), shallow[idx[j]].end(), fs.data.begin() + static_cast<std::ptrdiff_t>(j * features::kNumFeatures));
            });

            ts::Tape tape;
            model::Bound bound(tape, params);
            Var z = model::project(bound, model::encode(bound, tape.constant(std::move(x))));
            Var l_sup = losses::sup_con_loss(z, labels, cfg.temperature, cfg.supcon_denominator);
            Var s = ts::gather_rows(model::shallow_embed(bound, tape.constant(std::move(fs))), source);
            Var l_align = losses::align_loss(s, model::deep_embed(bound, z));
            Var total = ts::add(l_sup, ts::scalar_mul(l_align, cfg.alpha));
            tape.backward(total);

            const auto rep = losses::total_loss(l_sup.value().item(), l_align.value().item(), cfg.alpha);
            if (!all_finite(rep.l_total)) {
                throw Error(ErrorCode::NonFiniteLoss, fmt::format("non-finite loss at epoch {} step {}", epoch, step));
            }
            result.log.push_back({epoch, step, rep.l_sup, rep.l_align, rep.l_total});
            sgd_step(params, bound.grads(), cfg, state);
        }
        spdlog::debug("pretrain epoch {} done, last l_total {:.6g}", epoch, result.log.back().l_total);
    }
    params.set_frozen(Group::align, false);
    params.set_frozen(Group::classifier, false);
    result.params = std::move(params);
    return result;
}

PretrainResult pretrain(const std::vector<dataio::EchoSegment>& data, const TrainConfig& cfg,
                        const features::ReferenceStats& ref, const gini::FeatureWeights& weights,
                        const features::FeatureConfig& fcfg, const augment::AugmentConfig& aug,
                        const model::ModelConfig& mcfg) {
    return pretrain(data, shallow_inputs(data, ref, weights, fcfg), model::init_params(mcfg, cfg.seed), cfg, aug);
}

FinetuneResult finetune(model::ModelParams params, const std::vector<dataio::EchoSegment>& data, const TrainConfig& cfg) {
    cfg.validate();
    params.set_frozen(Group::encoder, true);
    params.set_frozen(Group::align, true);
    params.set_frozen(Group::head, false);
    params.set_frozen(Group::classifier, false);

    // The encoder is frozen and fine-tuning sees no augmentation, so representations are fixed.
    const std::size_t repr = params.config.repr_dim;
    Tensor reps(Shape{data.size(), repr});
    constexpr std::size_t kChunk = 64;
    for (std::size_t lo = 0; lo < data.size(); lo += kChunk) {
        const std::size_t hi = std::min(data.size(), lo + kChunk);
        std::vector<const dataio::EchoSegment*> segs;
        for (std::size_t i = lo; i < hi; ++i) segs.push_back(&data[i]);
        ts::Tape tape;
        model::Bound bound(tape, params);
        const Tensor r = model::encode(bound, tape.constant(modulus_batch(segs))).value();
        std::copy(r.data.begin(), r.data.end(), reps.data.begin() + static_cast<std::ptrdiff_t>(lo * repr));
    }

    BalancedSampler sampler(data, cfg.batch_size, mix_seed(cfg.seed, 0xf17e));
    const std::size_t steps = sampler.batches_per_epoch(data.size());
    FinetuneResult result;
    SgdState state;
    for (std::size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        for (std::size_t step = 0; step < steps; ++step) {
            const auto idx = sampler.next();
            Tensor xb(Shape{idx.size(), repr});
            std::vector<int> labels(idx.size());
            for (std::size_t j = 0; j < idx.size(); ++j) {
                std::copy_n(reps.data.begin() + static_cast<std::ptrdiff_t>(idx[j] * repr), repr,
                            xb.data.begin() + static_cast<std::ptrdiff_t>(j * repr));
                labels[j] = static_cast<int>(data[idx[j]].label);
            }
            ts::Tape tape;
            model::Bound bound(tape, params);
            Var logits = model::classify(bound, model::project(bound, tape.constant(std::move(xb))));
            Var loss = losses::cross_entropy(logits, labels);
            tape.backward(loss);

            const Tensor& lv = logits.value();
            std::size_t correct = 0;
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const int pred = lv.data[j * 2 + 1] > lv.data[j * 2] ? 1 : 0;
                correct += pred == labels[j] ? 1 : 0;
            }
            const double l = loss.value().item();
            if (!all_finite(l)) throw Error(ErrorCode::NonFiniteLoss, fmt::format("non-finite loss at epoch {} step {}", epoch, step));
            result.log.push_back({epoch, step, l, static_cast<double>(correct) / static_cast<double>(idx.size())});
            sgd_step(params, bound.grads(), cfg, state);
        }
        spdlog::debug("finetune epoch {} done, last loss {:.6g}", epoch, result.log.back().loss);
    }
    result.params = std::move(params);
    return result;
}

std::string pretrain_log_csv(const std::vector<PretrainLogRow>& log) {
    std::string out = "epoch,step,l_sup,l_align,l_total\n";
    for (const auto& r : log) out += fmt::format("{},{},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.step, r.l_sup, r.l_align, r.l_total);
    return out;
}

std::string finetune_log_csv(const std::vector<FinetuneLogRow>& log) {
    std::string out = "epoch,step,loss,accuracy\n";
    for (const auto& r : log) out += fmt::format("{},{},{:.17g},{:.17g}\n", r.epoch, r.step, r.loss, r.accuracy);
    return out;
}

}  // namespace mdfg::trainer
