#include "mdfg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mdfg/parallel.hpp"

namespace mdfg::pipeline {

using dataio::CellKind;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::vector<dataio::ComplexSeries> synthesize(const config::RunConfig& cfg) {
    const auto& sc = cfg.synth;
    std::vector<dataio::ComplexSeries> cells(sc.n_cells);
    parallel_for(sc.n_cells, [&](std::size_t id) {
        auto ccfg = sc.clutter;
        ccfg.seed = mix_seed(sc.clutter.seed, id);
        auto cell = synthgen::gen_clutter(sc.samples_per_cell, sc.prf_hz, ccfg);
        const bool primary = std::find(sc.primary_cells.begin(), sc.primary_cells.end(), id) != sc.primary_cells.end();
        const bool secondary = std::find(sc.secondary_cells.begin(), sc.secondary_cells.end(), id) != sc.secondary_cells.end();
        if (primary || secondary) {
            auto tcfg = sc.target;
            tcfg.seed = mix_seed(sc.target.seed, id);
            // range sidelobe leakage: the neighbours see the target 10 dB down
            if (secondary) tcfg.scr_db -= 10.0;
            cell = synthgen::gen_target_in_clutter(cell, tcfg);
        }
        cell.cell_id = static_cast<int>(id);
        cell.cell_kind = primary ? CellKind::primary_target : secondary ? CellKind::secondary_target : CellKind::pure_clutter;
        // what is stored on disk is what every later stage sees
        cell.samples = dataio::quantize_f32(cell.samples);
        cells[id] = std::move(cell);
    });
    return cells;
}

Dataset build_dataset(const std::vector<dataio::ComplexSeries>& cells, const config::RunConfig& cfg) {
    auto seg_cfg = cfg.data.segmentation;
    std::size_t n_primary = 0, shortest = 0;
    for (const auto& c : cells) {
        if (c.cell_kind != CellKind::primary_target) continue;
        shortest = n_primary == 0 ? c.samples.size() : std::min(shortest, c.samples.size());
        ++n_primary;
    }
    if (cfg.data.target_segments > 0 && n_primary > 0) {
        const std::size_t per_cell = (cfg.data.target_segments + n_primary - 1) / n_primary;
        seg_cfg.stride_target = dataio::plan_oversampling(shortest, seg_cfg.seg_len, per_cell);
    }
    Dataset ds;
    ds.stride_target = seg_cfg.stride_target;
    for (const auto& c : cells) {
        auto segs = dataio::segment(c, seg_cfg);
        std::move(segs.begin(), segs.end(), std::back_inserter(ds.segments));
    }
    ds.split = dataio::make_splits(ds.segments, cfg.data.split_seed);
    return ds;
}

std::vector<dataio::EchoSegment> select(const std::vector<dataio::EchoSegment>& segs, const std::vector<std::size_t>& ids) {
    std::vector<dataio::EchoSegment> out;
    out.reserve(ids.size());
    for (auto i : ids) {
        if (i >= segs.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("segment id {} out of range ({} segments)", i, segs.size()));
        out.push_back(segs[i]);
    }
    return out;
}

FeatureTable extract_features(const Dataset& ds, const features::FeatureConfig& fcfg) {
    std::vector<features::SegmentStats> stats(ds.segments.size());
    parallel_for(stats.size(), [&](std::size_t i) { stats[i] = features::segment_stats(ds.segments[i].samples, fcfg); });

    std::vector<features::SegmentStats> pool;
    for (auto i : ds.split.pretrain_ids) {
        if (ds.segments[i].label == Label::clutter) pool.push_back(stats[i]);
    }
    FeatureTable t;
    t.ref = features::fit_reference(pool);
    t.raw.resize(stats.size());
    t.normalized.resize(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        t.raw[i] = features::raw_from_stats(stats[i], t.ref);
        t.normalized[i] = features::normalize(t.raw[i], t.ref).as_array();
    }
    return t;
}

GiniResult weigh_features(const Dataset& ds, const FeatureTable& table, gini::Weighting mode) {
    std::vector<features::FeatureArray> rows;
    std::vector<int> labels;
    for (auto i : ds.split.pretrain_ids) {
        rows.push_back(table.normalized[i]);
        labels.push_back(static_cast<int>(ds.segments[i].label));
    }
    GiniResult r;
    r.evals = gini::evaluate_features(rows, labels);
    r.weights = gini::feature_weights(r.evals, mode);
    return r;
}

Evaluation calibrate_and_evaluate(const model::ModelParams& params, const Dataset& ds, double preset_pfa) {
    Evaluation e;
    e.val_scores = detector::score_batch(params, select(ds.segments, ds.split.val_ids));
    e.threshold = detector::calibrate_threshold(e.val_scores, preset_pfa);
    const auto test = select(ds.segments, ds.split.test_ids);
    e.test_scores = detector::score_batch(params, test);
    std::vector<Label> truth;
    truth.reserve(test.size());
    for (const auto& s : test) truth.push_back(s.label);
    e.confusion = detector::confusion(truth, detector::decide_all(e.test_scores, e.threshold));
    e.metrics = detector::metrics(e.confusion);
    return e;
}

namespace {

std::vector<features::FeatureArray> weighted_rows(const FeatureTable& table,
                                                  const gini::FeatureWeights& w, const std::vector<std::size_t>& ids) {
    std::vector<features::FeatureArray> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(gini::apply_weights(features::ShallowFeatureVector::from_array(table.normalized[i]), w));
    return out;
}

}  // namespace

RunResult train_and_evaluate(const config::RunConfig& cfg, const Dataset& ds, const FeatureTable& table,
                             const gini::FeatureWeights& weights) {
    RunResult r;
    const auto pre = select(ds.segments, ds.split.pretrain_ids);
    r.pretrained = trainer::pretrain(pre, weighted_rows(table, weights, ds.split.pretrain_ids),
                                     model::init_params(cfg.model, cfg.train.seed), cfg.train, cfg.augment);
    r.finetuned = trainer::finetune(r.pretrained.params, select(ds.segments, ds.split.train_ids), cfg.train);
    r.eval = calibrate_and_evaluate(r.finetuned.params, ds, cfg.detect.preset_pfa);
    return r;
}

std::string reference_to_json(const features::ReferenceStats& ref) {
    nlohmann::ordered_json j;
    j["mean_amp"] = ref.mean_amp;
    j["mean_peak"] = ref.mean_peak;
    j["mean_entropy"] = ref.mean_entropy;
    j["feature_names"] = features::kFeatureNames;
    j["feat_min"] = ref.feat_min;
    j["feat_max"] = ref.feat_max;
    return j.dump(2) + "\n";
}

features::ReferenceStats reference_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        features::ReferenceStats ref;
        ref.mean_amp = j.at("mean_amp");
        ref.mean_peak = j.at("mean_peak");
        ref.mean_entropy = j.at("mean_entropy");
        ref.feat_min = j.at("feat_min").get<features::FeatureArray>();
        ref.feat_max = j.at("feat_max").get<features::FeatureArray>();
        return ref;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("reference document: ") + e.what());
    }
}

std::string features_csv(const Dataset& ds, const FeatureTable& table) {
    std::vector<const char*> split_of(ds.segments.size(), "");
    for (auto i : ds.split.pretrain_ids) split_of[i] = "pretrain";
    for (auto i : ds.split.train_ids) split_of[i] = "train";
    for (auto i : ds.split.val_ids) split_of[i] = "val";
    for (auto i : ds.split.test_ids) split_of[i] = "test";
    std::string out = "index,split,source_cell,start_index,label";
    for (const char* n : features::kFeatureNames) out += fmt::format(",raw_{}", n);
    for (const char* n : features::kFeatureNames) out += fmt::format(",{}", n);
    out += "\n";
    for (std::size_t i = 0; i < ds.segments.size(); ++i) {
        const auto& s = ds.segments[i];
        out += fmt::format("{},{},{},{},{}", i, split_of[i], s.source_cell, s.start_index, to_string(s.label));
        for (double v : table.raw[i]) out += fmt::format(",{:.17g}", v);
        for (double v : table.normalized[i]) out += fmt::format(",{:.17g}", v);
        out += "\n";
    }
    return out;
}

FeatureTable features_from_csv(const std::string& text, std::size_t n_segments, const features::ReferenceStats& ref) {
    FeatureTable t;
    t.ref = ref;
    t.raw.resize(n_segments);
    t.normalized.resize(n_segments);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        constexpr std::size_t nf = features::kNumFeatures;
        if (cols.size() != 5 + 2 * nf) {
            throw Error(ErrorCode::MalformedHeader, fmt::format("features table line {} has {} columns", rows + 2, cols.size()));
        }
        const std::size_t idx = std::stoul(cols[0]);
        if (idx >= n_segments) throw Error(ErrorCode::LengthMismatch, fmt::format("features table row {} beyond {} segments", idx, n_segments));
        for (std::size_t k = 0; k < nf; ++k) {
            t.raw[idx][k] = std::stod(cols[5 + k]);
            t.normalized[idx][k] = std::stod(cols[5 + nf + k]);
        }
        ++rows;
    }
    if (rows != n_segments) {
        throw Error(ErrorCode::LengthMismatch, fmt::format("features table has {} rows for {} segments", rows, n_segments));
    }
    return t;
}

namespace {

Dataset load_dataset(const config::RunConfig& cfg, const fs::path& out) {
    const auto cells = dataio::read_rds(out / artifact::scenario);
    Dataset ds = build_dataset(cells, cfg);
    const fs::path split_path = out / artifact::splits;
    if (fs::exists(split_path)) ds.split = dataio::split_from_json(read_text(split_path));
    return ds;
}

FeatureTable load_features(const Dataset& ds, const fs::path& out) {
    const auto ref = reference_from_json(read_text(out / artifact::reference));
    return features_from_csv(read_text(out / artifact::features), ds.segments.size(), ref);
}

void write_evaluation(const Evaluation& e, const Dataset& ds, const fs::path& out) {
    write_text(out / artifact::report, detector::evaluation_report_json(e.threshold, e.confusion, e.metrics));
    write_text(out / artifact::test_scores, detector::scores_csv(select(ds.segments, ds.split.test_ids), e.test_scores, e.threshold));
}

}  // namespace

void stage_synth(const config::RunConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    write_text(out / artifact::config, config::to_ini(cfg));
    dataio::write_rds(out / artifact::scenario, synthesize(cfg));
    spdlog::info("synth-gen: {} cells written to {}", cfg.synth.n_cells, (out / artifact::scenario).string());
}

void stage_features(const config::RunConfig& cfg, const fs::path& out) {
    const auto cells = dataio::read_rds(out / artifact::scenario);
    const Dataset ds = build_dataset(cells, cfg);
    write_text(out / artifact::splits, dataio::split_to_json(ds.split));
    const FeatureTable t = extract_features(ds, cfg.features);
    write_text(out / artifact::reference, reference_to_json(t.ref));
    write_text(out / artifact::features, features_csv(ds, t));
    spdlog::info("extract-features: {} segments (target stride {}), split {}/{}/{}/{}", ds.segments.size(), ds.stride_target,
                 ds.split.pretrain_ids.size(), ds.split.train_ids.size(), ds.split.val_ids.size(), ds.split.test_ids.size());
}

void stage_gini(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const auto g = weigh_features(ds, load_features(ds, out), cfg.gini.weighting);
    write_text(out / artifact::weights, gini::weights_report_json(g.evals, g.weights, cfg.gini.weighting));
    spdlog::info("gini-weights: {}", fmt::join(g.weights.w, " "));
}

void stage_pretrain(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const FeatureTable t = load_features(ds, out);
    const auto w = gini::weights_from_report_json(read_text(out / artifact::weights));
    const auto res = trainer::pretrain(select(ds.segments, ds.split.pretrain_ids), weighted_rows(t, w, ds.split.pretrain_ids),
                                       model::init_params(cfg.model, cfg.train.seed), cfg.train, cfg.augment);
    model::save_checkpoint(out / artifact::pretrained, res.params);
    write_text(out / artifact::pretrain_log, trainer::pretrain_log_csv(res.log));
    spdlog::info("pretrain: {} steps, final l_total {:.6g}", res.log.size(), res.log.empty() ? 0.0 : res.log.back().l_total);
}

void stage_finetune(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const auto res = trainer::finetune(model::load_checkpoint(out / artifact::pretrained), select(ds.segments, ds.split.train_ids), cfg.train);
    model::save_checkpoint(out / artifact::finetuned, res.params);
    write_text(out / artifact::finetune_log, trainer::finetune_log_csv(res.log));
    spdlog::info("finetune: {} steps, final loss {:.6g}", res.log.size(), res.log.empty() ? 0.0 : res.log.back().loss);
}

void stage_calibrate(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const auto params = model::load_checkpoint(out / artifact::finetuned);
    const auto val = select(ds.segments, ds.split.val_ids);
    const auto scores = detector::score_batch(params, val);
    const auto th = detector::calibrate_threshold(scores, cfg.detect.preset_pfa);
    write_text(out / artifact::threshold, detector::threshold_to_json(th));
    write_text(out / artifact::val_scores, detector::scores_csv(val, scores, th));
    spdlog::info("calibrate: threshold {:.17g} from {} clutter scores", th.threshold, th.n_calibration);
}

void stage_evaluate(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const auto params = model::load_checkpoint(out / artifact::finetuned);
    Evaluation e;
    e.threshold = detector::threshold_from_json(read_text(out / artifact::threshold));
    const auto test = select(ds.segments, ds.split.test_ids);
    e.test_scores = detector::score_batch(params, test);
    std::vector<Label> truth;
    for (const auto& s : test) truth.push_back(s.label);
    e.confusion = detector::confusion(truth, detector::decide_all(e.test_scores, e.threshold));
    e.metrics = detector::metrics(e.confusion);
    write_evaluation(e, ds, out);
    spdlog::info("evaluate: mIoU {:.4f}, P_d {:.4f}, true P_fa {:.4f}", e.metrics.miou, e.metrics.recall_pd, e.metrics.true_pfa);
}

std::string ablation_header() { return "alpha,tp,fn,fp,tn,accuracy,precision,recall_pd,true_pfa,miou,threshold\n"; }

std::string ablation_row(double alpha, const Evaluation& e) {
    const auto& c = e.confusion;
    const auto& m = e.metrics;
    return fmt::format("{:.17g},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", alpha, c.tp, c.fn, c.fp, c.tn,
                       m.accuracy, m.precision, m.recall_pd, m.true_pfa, m.miou, e.threshold.threshold);
}

void stage_ablate(const config::RunConfig& cfg, const fs::path& out) {
    const Dataset ds = load_dataset(cfg, out);
    const FeatureTable t = load_features(ds, out);
    const auto w = gini::weights_from_report_json(read_text(out / artifact::weights));
    std::string table = ablation_header();
    for (std::size_t i = 0; i < cfg.alpha_sweep.size(); ++i) {
        config::RunConfig c = cfg;
        c.train.alpha = cfg.alpha_sweep[i];
        const RunResult r = train_and_evaluate(c, ds, t, w);
        const fs::path dir = out / fmt::format("ablation_{}", i);
        fs::create_directories(dir);
        write_text(dir / artifact::pretrain_log, trainer::pretrain_log_csv(r.pretrained.log));
        write_text(dir / artifact::finetune_log, trainer::finetune_log_csv(r.finetuned.log));
        table += ablation_row(c.train.alpha, r.eval);
        spdlog::info("ablate-alpha: alpha {} -> mIoU {:.4f}", c.train.alpha, r.eval.metrics.miou);
    }
    write_text(out / artifact::ablation, table);
}

void run_all(const config::RunConfig& cfg, const fs::path& out) {
    stage_synth(cfg, out);
    stage_features(cfg, out);
    stage_gini(cfg, out);
    stage_pretrain(cfg, out);
    stage_finetune(cfg, out);
    stage_calibrate(cfg, out);
    stage_evaluate(cfg, out);
}

}  // namespace mdfg::pipeline
