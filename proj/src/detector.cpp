#include "mdfg/detector.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mdfg/parallel.hpp"
#include "mdfg/trainer.hpp"

namespace mdfg::detector {

double target_probability(double logit_clutter, double logit_target) {
    return 1.0 / (1.0 + std::exp(logit_clutter - logit_target));
}

std::vector<double> score_batch(const model::ModelParams& params, const std::vector<dataio::EchoSegment>& segs) {
    constexpr std::size_t kChunk = 64;
    std::vector<double> out(segs.size());
    const std::size_t chunks = (segs.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t lo = c * kChunk, hi = std::min(segs.size(), lo + kChunk);
        std::vector<const dataio::EchoSegment*> batch;
        for (std::size_t i = lo; i < hi; ++i) batch.push_back(&segs[i]);
        tensor::Tape tape;
        model::Bound bound(tape, params);
        const auto x = tape.constant(trainer::modulus_batch(batch));
        const tensor::Tensor& logits = model::classify(bound, model::project(bound, model::encode(bound, x))).value();
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t r = i - lo;
            out[i] = target_probability(logits.data[r * 2], logits.data[r * 2 + 1]);
        }
    });
    return out;
}

double score(const model::ModelParams& params, const dataio::EchoSegment& seg) {
    return score_batch(params, {seg}).front();
}

DetectionThreshold calibrate_threshold(std::span<const double> clutter_scores, double preset_pfa) {
    if (clutter_scores.empty()) throw Error(ErrorCode::EmptyCalibrationSet, "no clutter scores to calibrate on");
    if (!(preset_pfa > 0.0 && preset_pfa < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("preset_pfa must lie in (0, 1), got {}", preset_pfa));
    }
    const std::size_t m = clutter_scores.size();
    if (static_cast<double>(m) < std::ceil(1.0 / preset_pfa)) {
        spdlog::warn("calibrating P_fa={} on only {} clutter scores; at least {} are needed for one allowed false alarm",
                     preset_pfa, m, std::ceil(1.0 / preset_pfa));
    }
    std::vector<double> s(clutter_scores.begin(), clutter_scores.end());
    std::sort(s.begin(), s.end(), std::greater<>());
    // The epsilon keeps products such as 0.29 * 100 from flooring one short.
    const auto k = static_cast<std::size_t>(std::floor(preset_pfa * static_cast<double>(m) + 1e-9));

    DetectionThreshold th;
    th.preset_pfa = preset_pfa;
    th.n_calibration = m;
    if (k == 0) {
        th.threshold = s.front() + 1e-9;
        return th;
    }
    const double above = s[k - 1], below = s[k];
    if (above == below) {
        th.threshold = above;
        return th;
    }
    const double mid = 0.5 * (above + below);
    th.threshold = mid < above ? mid : below;
    return th;
}

std::vector<Label> decide_all(std::span<const double> scores, const DetectionThreshold& th) {
    std::vector<Label> out;
    out.reserve(scores.size());
    for (double s : scores) out.push_back(decide(s, th));
    return out;
}

ConfusionMatrix confusion(std::span<const Label> truth, std::span<const Label> decisions) {
    if (truth.size() != decisions.size()) {
        throw Error(ErrorCode::LengthMismatch, fmt::format("{} labels vs {} decisions", truth.size(), decisions.size()));
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == Label::target, d = decisions[i] == Label::target;
        if (t && d) ++cm.tp;
        else if (t) ++cm.fn;
        else if (d) ++cm.fp;
        else ++cm.tn;
    }
    return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix holds no samples");
    MetricsReport r;
    r.accuracy = ratio(cm.tp + cm.tn, total);
    r.precision = ratio(cm.tp, cm.tp + cm.fp);
    r.recall_pd = ratio(cm.tp, cm.tp + cm.fn);
    r.true_pfa = ratio(cm.fp, cm.fp + cm.tn);
    // (tp/a + tn/b) / 2 over a common denominator; an empty class term counts as 0
    const std::uint64_t a = cm.tp + cm.fn + cm.fp, b = cm.tn + cm.fn + cm.fp;
    if (a == 0 || b == 0) {
        r.miou = a == 0 ? ratio(cm.tn, 2 * b) : ratio(cm.tp, 2 * a);
    } else {
        r.miou = ratio(cm.tp * b + cm.tn * a, 2 * a * b);
    }
    return r;
}

std::string threshold_to_json(const DetectionThreshold& th) {
    nlohmann::ordered_json j;
    j["threshold"] = th.threshold;
    j["preset_pfa"] = th.preset_pfa;
    j["n_calibration"] = th.n_calibration;
    return j.dump(2) + "\n";
}

DetectionThreshold threshold_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        DetectionThreshold th;
        th.threshold = j.at("threshold");
        th.preset_pfa = j.at("preset_pfa");
        th.n_calibration = j.at("n_calibration");
        return th;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("threshold document: ") + e.what());
    }
}

std::string evaluation_report_json(const DetectionThreshold& th, const ConfusionMatrix& cm, const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["preset_pfa"] = th.preset_pfa;
    j["threshold"] = th.threshold;
    j["n_calibration"] = th.n_calibration;
    j["confusion"] = {{"tp", cm.tp}, {"fn", cm.fn}, {"fp", cm.fp}, {"tn", cm.tn}};
    j["metrics"] = {{"accuracy", m.accuracy},
                    {"precision", m.precision},
                    {"recall_pd", m.recall_pd},
                    {"true_pfa", m.true_pfa},
                    {"miou", m.miou}};
    return j.dump(2) + "\n";
}

std::string scores_csv(const std::vector<dataio::EchoSegment>& segs, std::span<const double> scores,
                       const DetectionThreshold& th) {
    if (segs.size() != scores.size()) {
        throw Error(ErrorCode::LengthMismatch, fmt::format("{} segments vs {} scores", segs.size(), scores.size()));
    }
    std::string out = "index,source_cell,start_index,label,score,decision\n";
    for (std::size_t i = 0; i < segs.size(); ++i) {
        out += fmt::format("{},{},{},{},{:.17g},{}\n", i, segs[i].source_cell, segs[i].start_index, to_string(segs[i].label),
                           scores[i], to_string(decide(scores[i], th)));
    }
    return out;
}

}  // namespace mdfg::detector
