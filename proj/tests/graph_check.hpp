#pragma once

// Five-point central differences of the full pre-training objective against the tape,
// taken over every trainable model parameter.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mdfg/losses.hpp"
#include "mdfg/model.hpp"

namespace graph_check {

using namespace mdfg;

struct Toy {
    model::ModelParams params;
    tensor::Tensor x;              // (views*B, seg_len) amplitudes
    tensor::Tensor fs;             // (B, 6) weighted shallow rows
    std::vector<int> labels;       // per view row
    std::vector<std::size_t> src;  // view row -> shallow row
    double alpha = 0.1;
    double temperature = 0.07;
};

inline Toy make_toy(std::uint64_t seed, std::size_t samples = 4, std::size_t views = 2) {
    model::ModelConfig cfg;
    cfg.seg_len = 16;
    cfg.blocks = 2;
    cfg.channels = 3;
    cfg.kernel = 3;
    cfg.repr_dim = 5;
    cfg.hidden = 6;
    cfg.proj_dim = 4;
    cfg.embed_dim = 3;
    Toy t{model::init_params(cfg, seed), {}, {}, {}, {}};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    t.x = tensor::Tensor({views * samples, cfg.seg_len});
    for (auto& v : t.x.data) v = u(rng);
    t.fs = tensor::Tensor({samples, 6});
    for (auto& v : t.fs.data) v = u(rng) / 12.0;
    for (std::size_t v = 0; v < views; ++v) {
        for (std::size_t j = 0; j < samples; ++j) {
            t.labels.push_back(int(j % 2));
            t.src.push_back(j);
        }
    }
    // Positive encoder and hidden-layer parameters keep every ReLU input well above zero,
    // so a finite step never crosses a kink.
    for (auto& e : t.params.entries) {
        const bool relu_fed = e.group == model::Group::encoder || e.name == "head.w1" || e.name == "head.b1";
        for (auto& v : e.value.data) {
            if (e.is_bias) v = relu_fed ? 0.05 * u(rng) : 0.05 * (u(rng) - 1.0);
            else if (relu_fed) v = std::abs(v);
        }
    }
    return t;
}

inline tensor::Var objective(const model::Bound& b, const Toy& t) {
    auto& tape = b.tape();
    auto z = model::project(b, model::encode(b, tape.constant(t.x)));
    auto l_sup = losses::sup_con_loss(z, t.labels, t.temperature);
    auto s = tensor::gather_rows(model::shallow_embed(b, tape.constant(t.fs)), t.src);
    auto l_align = losses::align_loss(s, model::deep_embed(b, z));
    return tensor::add(l_sup, tensor::scalar_mul(l_align, t.alpha));
}

inline double value(const Toy& t, const model::ModelParams& p) {
    tensor::Tape tape;
    model::Bound b(tape, p);
    return objective(b, t).value().item();
}

/// Max relative error |a-n| / max(floor, |a|+|n|) over every parameter of unfrozen groups.
/// The default floor sits above the round-off of differencing a loss of order ten.
inline double max_rel_error(const Toy& t, double eps = 3e-3, double floor = 1e-6) {
    tensor::Tape tape;
    model::Bound b(tape, t.params);
    tape.backward(objective(b, t));
    const auto grads = b.grads();
    model::ModelParams probe = t.params;
    double worst = 0.0;
    for (std::size_t k = 0; k < probe.entries.size(); ++k) {
        if (probe.is_frozen(probe.entries[k].group)) continue;
        auto& data = probe.entries[k].value.data;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            auto at = [&](double step) {
                data[i] = orig + step;
                const double f = value(t, probe);
                data[i] = orig;
                return f;
            };
            const double num = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
            const double a = grads[k].data[i];
            worst = std::max(worst, std::abs(a - num) / std::max(floor, std::abs(a) + std::abs(num)));
        }
    }
    return worst;
}

}  // namespace graph_check
