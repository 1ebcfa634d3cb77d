#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mdfg/detector.hpp"
#include "mdfg/trainer.hpp"
#include "oracles.hpp"

using namespace mdfg;
using namespace mdfg::trainer;
using model::Group;
using tensor::Tensor;

namespace {

model::ModelConfig small() {
    model::ModelConfig c;
    c.seg_len = 64;
    c.blocks = 2;
    c.channels = 8;
    c.kernel = 5;
    c.repr_dim = 8;
    c.hidden = 8;
    c.proj_dim = 6;
    c.embed_dim = 4;
    return c;
}

struct Toy {
    std::vector<dataio::EchoSegment> data;
    std::vector<features::FeatureArray> shallow;
};

// Clutter is complex noise; targets add a strong tone.
Toy separable(std::size_t per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    Toy t;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        dataio::EchoSegment s;
        s.label = i % 2 ? Label::target : Label::clutter;
        s.samples = oracle::noise(64, rng);
        if (s.label == Label::target) {
            const auto tone = oracle::tone(64, 9.0, 3.0);
            for (std::size_t k = 0; k < 64; ++k) s.samples[k] += tone[k];
        }
        s.start_index = i * 64;
        t.data.push_back(s);
        features::FeatureArray f{};
        for (std::size_t k = 0; k < f.size(); ++k) f[k] = (s.label == Label::target) == (k % 2 == 0) ? 0.15 + u(rng) : u(rng);
        t.shallow.push_back(f);
    }
    return t;
}

TrainConfig quick() {
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 6;
    c.finetune_epochs = 30;
    return c;
}

augment::AugmentConfig aug() {
    augment::AugmentConfig a;
    return a;
}

double epoch_mean(const std::vector<PretrainLogRow>& log, std::size_t epoch) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : log) {
        if (r.epoch == epoch) {
            s += r.l_total;
            ++n;
        }
    }
    REQUIRE(n > 0);
    return s / double(n);
}

model::ModelParams single(double w, bool bias = false) {
    model::ModelParams p;
    p.entries.push_back({"w", Group::head, bias, Tensor({1}, {w})});
    p.entries.push_back({"f", Group::encoder, false, Tensor({1}, {w})});
    return p;
}

}  // namespace

TEST_CASE("sgd step") {
    TrainConfig c;
    c.lr = 0.1;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    auto p = single(1.0);
    p.set_frozen(Group::encoder, true);
    SgdState st;
    sgd_step(p, {Tensor({1}, {0.5}), Tensor({1}, {0.5})}, c, st);
    CHECK(p.entries[0].value.data[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p.entries[1].value.data[0] == 1.0);

    // weight decay only: w - lr*wd*w
    c.lr = 0.01;
    c.weight_decay = 1e-4;
    auto q = single(1.0);
    SgdState st2;
    sgd_step(q, {Tensor({1}, {0.0}), Tensor({1}, {0.0})}, c, st2);
    CHECK(q.entries[0].value.data[0] == doctest::Approx(1.0 - 1e-6).epsilon(1e-15));
    auto b = single(1.0, true);
    SgdState st3;
    sgd_step(b, {Tensor({1}, {0.0}), Tensor({1}, {0.0})}, c, st3);
    CHECK(b.entries[0].value.data[0] == 1.0);

    // momentum carries the previous step
    c.lr = 0.1;
    c.weight_decay = 0.0;
    c.momentum = 0.9;
    auto m = single(0.0);
    SgdState st4;
    sgd_step(m, {Tensor({1}, {1.0}), Tensor({1}, {0.0})}, c, st4);
    sgd_step(m, {Tensor({1}, {1.0}), Tensor({1}, {0.0})}, c, st4);
    CHECK(m.entries[0].value.data[0] == doctest::Approx(-0.1 - 0.19).epsilon(1e-14));
    CHECK_THROWS_AS(sgd_step(m, {Tensor({1}, {1.0})}, c, st4), Error);
}

TEST_CASE("pre-training lowers the objective") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto toy = separable(32, seed);
        auto cfg = quick();
        cfg.seed = seed;
        const auto r = pretrain(toy.data, toy.shallow, model::init_params(small(), seed), cfg, aug());
        REQUIRE(!r.log.empty());
        for (const auto& row : r.log) CHECK(std::isfinite(row.l_total));
        CHECK(epoch_mean(r.log, cfg.epochs - 1) < epoch_mean(r.log, 0));
    }
}

TEST_CASE("alpha zero leaves the alignment matrices alone") {
    const auto toy = separable(16, 4);
    auto cfg = quick();
    cfg.epochs = 2;
    cfg.alpha = 0.0;
    const auto init = model::init_params(small(), 4);
    const auto r = pretrain(toy.data, toy.shallow, init, cfg, aug());
    CHECK(r.params.at("align.ws").value.data == init.at("align.ws").value.data);
    CHECK(r.params.at("align.wd").value.data == init.at("align.wd").value.data);
    CHECK(r.params.at("cls.w").value.data == init.at("cls.w").value.data);
    CHECK(r.params.at("enc.stem.w").value.data != init.at("enc.stem.w").value.data);
    for (const auto& row : r.log) CHECK(row.l_total == row.l_sup);

    cfg.alpha = 0.1;
    const auto r2 = pretrain(toy.data, toy.shallow, init, cfg, aug());
    CHECK(r2.params.at("align.ws").value.data != init.at("align.ws").value.data);
}

TEST_CASE("training is deterministic") {
    const auto toy = separable(16, 5);
    auto cfg = quick();
    cfg.epochs = 2;
    cfg.finetune_epochs = 2;
    const auto init = model::init_params(small(), 5);
    const auto a = pretrain(toy.data, toy.shallow, init, cfg, aug());
    const auto b = pretrain(toy.data, toy.shallow, init, cfg, aug());
    CHECK(model::encode_checkpoint(a.params) == model::encode_checkpoint(b.params));
    CHECK(pretrain_log_csv(a.log) == pretrain_log_csv(b.log));
    const auto fa = finetune(a.params, toy.data, cfg), fb = finetune(b.params, toy.data, cfg);
    CHECK(model::encode_checkpoint(fa.params) == model::encode_checkpoint(fb.params));
    CHECK(finetune_log_csv(fa.log) == finetune_log_csv(fb.log));
}

TEST_CASE("fine-tuning trains the classifier on a frozen encoder") {
    const auto toy = separable(32, 6);
    auto cfg = quick();
    const auto pre = pretrain(toy.data, toy.shallow, model::init_params(small(), 6), cfg, aug());
    const auto ft = finetune(pre.params, toy.data, cfg);
    for (std::size_t i = 0; i < pre.params.entries.size(); ++i) {
        const auto& e = pre.params.entries[i];
        if (e.group == Group::encoder || e.group == Group::align) CHECK(ft.params.entries[i].value.data == e.value.data);
    }
    CHECK(ft.params.at("cls.w").value.data != pre.params.at("cls.w").value.data);
    const auto scores = detector::score_batch(ft.params, toy.data);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        correct += (scores[i] > 0.5) == (toy.data[i].label == Label::target);
    }
    CHECK(double(correct) / double(scores.size()) >= 0.95);
    CHECK(finetune_log_csv(ft.log).rfind("epoch,step,loss,accuracy\n", 0) == 0);
}

TEST_CASE("modulus batch and config checks") {
    const auto toy = separable(2, 7);
    std::vector<const dataio::EchoSegment*> ptrs{&toy.data[1], &toy.data[0]};
    const auto m = modulus_batch(ptrs);
    CHECK(m.shape == tensor::Shape{2, 64});
    CHECK(m.data[0] == std::abs(toy.data[1].samples[0]));
    TrainConfig c;
    c.temperature = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = TrainConfig{};
    c.alpha = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
}
