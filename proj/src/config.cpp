#include "mdfg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace mdfg::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end) throw Error(ErrorCode::ConfigError, key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || std::isnan(out)) {
        throw Error(ErrorCode::ConfigError, key + ": expected a number, got '" + v + "'");
    }
    return out;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F f) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += f(xs[i]);
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

struct Section {
    std::string name;
    std::vector<Field> fields;
};

Field size_field(std::string key, std::size_t& ref) {
    return {key, [&ref, key](const std::string& v) { ref = to_size(key, v); }, [&ref] { return std::to_string(ref); }};
}
Field u64_field(std::string key, std::uint64_t& ref) {
    return {key, [&ref, key](const std::string& v) { ref = to_u64(key, v); }, [&ref] { return std::to_string(ref); }};
}
Field double_field(std::string key, double& ref) {
    return {key, [&ref, key](const std::string& v) { ref = to_double(key, v); }, [&ref] { return num(ref); }};
}
Field size_list_field(std::string key, std::vector<std::size_t>& ref) {
    return {key,
            [&ref, key](const std::string& v) {
                ref.clear();
                for (const auto& s : split_list(v)) ref.push_back(to_size(key, s));
            },
            [&ref] { return join(ref, [](std::size_t x) { return std::to_string(x); }); }};
}

// The table references fields of `c`; it must not outlive it.
std::vector<Section> bind(RunConfig& c) {
    auto& seg = c.data.segmentation;
    auto& cl = c.synth.clutter;
    auto& tg = c.synth.target;
    return {
        {"data",
         {size_field("seg_len", seg.seg_len), size_field("stride_clutter", seg.stride_clutter),
          size_field("stride_target", seg.stride_target), size_field("target_segments", c.data.target_segments),
          u64_field("split_seed", c.data.split_seed)}},
        {"synth",
         {size_field("n_cells", c.synth.n_cells), size_field("samples_per_cell", c.synth.samples_per_cell),
          double_field("prf_hz", c.synth.prf_hz), size_list_field("primary_cells", c.synth.primary_cells),
          size_list_field("secondary_cells", c.synth.secondary_cells), double_field("shape_nu", cl.shape_nu),
          double_field("mean_power", cl.mean_power), double_field("speckle_corr_rho", cl.speckle_corr_rho),
          u64_field("clutter_seed", cl.seed), double_field("doppler_hz", tg.doppler_hz), double_field("scr_db", tg.scr_db),
          double_field("amp_jitter", tg.amp_jitter), u64_field("target_seed", tg.seed)}},
        {"features",
         {size_field("g_len", c.features.g_len), size_field("h_len", c.features.h_len),
          size_field("time_stride", c.features.time_stride), double_field("quantile_q", c.features.quantile_q)}},
        {"gini",
         {{"weighting", [&c](const std::string& v) { c.gini.weighting = gini::parse_weighting(v); },
           [&c] { return std::string(gini::to_string(c.gini.weighting)); }}}},
        {"augment",
         {double_field("crop_lo", c.augment.crop_lo), double_field("crop_hi", c.augment.crop_hi),
          double_field("disturbance_snr_db", c.augment.disturbance_snr_db),
          {"methods",
           [&c](const std::string& v) {
               c.augment.methods_enabled.clear();
               for (const auto& s : split_list(v)) c.augment.methods_enabled.push_back(augment::parse_method(s));
           },
           [&c] { return join(c.augment.methods_enabled, [](augment::Method m) { return std::string(augment::to_string(m)); }); }},
          size_field("views_per_sample", c.augment.views_per_sample),
          {"resample", [&c](const std::string& v) { c.augment.resample = augment::parse_resample(v); },
           [&c] { return std::string(augment::to_string(c.augment.resample)); }}}},
        {"model",
         {size_field("blocks", c.model.blocks), size_field("channels", c.model.channels), size_field("kernel", c.model.kernel),
          size_field("repr_dim", c.model.repr_dim), size_field("hidden", c.model.hidden),
          size_field("proj_dim", c.model.proj_dim), size_field("embed_dim", c.model.embed_dim)}},
        {"train",
         {size_field("batch_size", c.train.batch_size), size_field("epochs", c.train.epochs),
          size_field("finetune_epochs", c.train.finetune_epochs), double_field("lr", c.train.lr),
          double_field("weight_decay", c.train.weight_decay), double_field("momentum", c.train.momentum),
          double_field("alpha", c.train.alpha), double_field("temperature", c.train.temperature),
          {"supcon_denominator", [&c](const std::string& v) { c.train.supcon_denominator = losses::parse_denominator(v); },
           [&c] { return std::string(losses::to_string(c.train.supcon_denominator)); }},
          u64_field("seed", c.train.seed),
          {"alpha_sweep",
           [&c](const std::string& v) {
               c.alpha_sweep.clear();
               for (const auto& s : split_list(v)) c.alpha_sweep.push_back(to_double("alpha_sweep", s));
           },
           [&c] { return join(c.alpha_sweep, num); }}}},
        {"detect", {double_field("preset_pfa", c.detect.preset_pfa)}},
    };
}

}  // namespace

void RunConfig::validate() const {
    try {
        [this] {
            data.segmentation.validate();
            synth.clutter.validate();
            if (synth.n_cells == 0) throw Error(ErrorCode::ConfigError, "synth.n_cells must be >= 1");
            if (!(synth.prf_hz > 0.0)) throw Error(ErrorCode::ConfigError, "synth.prf_hz must be > 0");
            if (!(std::abs(synth.target.doppler_hz) < synth.prf_hz / 2)) {
                throw Error(ErrorCode::ConfigError, "synth.doppler_hz must satisfy |doppler_hz| < prf_hz / 2");
            }
            if (!(synth.target.amp_jitter >= 0.0)) throw Error(ErrorCode::ConfigError, "synth.amp_jitter must be >= 0");
            for (auto id : synth.primary_cells) {
                if (id >= synth.n_cells) throw Error(ErrorCode::ConfigError, fmt::format("primary cell {} outside 0..{}", id, synth.n_cells - 1));
            }
            for (auto id : synth.secondary_cells) {
                if (id >= synth.n_cells) throw Error(ErrorCode::ConfigError, fmt::format("secondary cell {} outside 0..{}", id, synth.n_cells - 1));
                for (auto p : synth.primary_cells) {
                    if (p == id) throw Error(ErrorCode::ConfigError, fmt::format("cell {} is both primary and secondary", id));
                }
            }
            features.validate(data.segmentation.seg_len);
            augment.validate();
            if (model.seg_len != data.segmentation.seg_len) throw Error(ErrorCode::ConfigError, "model.seg_len must equal data.seg_len");
            model.validate();
            train.validate();
            for (double a : alpha_sweep) {
                if (!(a >= 0.0)) throw Error(ErrorCode::ConfigError, "alpha_sweep entries must be >= 0");
            }
            if (!(detect.preset_pfa > 0.0 && detect.preset_pfa < 1.0)) throw Error(ErrorCode::ConfigError, "detect.preset_pfa must lie in (0, 1)");
        }();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigError) throw;
        throw Error(ErrorCode::ConfigError, e.message());
    }
}

void RunConfig::apply_seed(std::uint64_t seed) {
    data.split_seed = mix_seed(seed, 1);
    synth.clutter.seed = mix_seed(seed, 2);
    synth.target.seed = mix_seed(seed, 3);
    train.seed = mix_seed(seed, 4);
}

RunConfig parse(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(ErrorCode::ConfigError, fmt::format("line {}: {}", e.line(), e.message()));
    }
    RunConfig cfg;
    auto table = bind(cfg);
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw Error(ErrorCode::ConfigError, "key '" + section + "' outside any section");
        auto sec = std::find_if(table.begin(), table.end(), [&](const Section& s) { return s.name == section; });
        if (sec == table.end()) throw Error(ErrorCode::ConfigError, "unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            auto f = std::find_if(sec->fields.begin(), sec->fields.end(), [&](const Field& x) { return x.key == key; });
            if (f == sec->fields.end()) throw Error(ErrorCode::ConfigError, "unknown key '" + key + "' in [" + section + "]");
            try {
                f->set(trim(value.data()));
            } catch (const Error& e) {
                throw Error(ErrorCode::ConfigError, "[" + section + "] " + e.message());
            }
        }
    }
    cfg.model.seg_len = cfg.data.segmentation.seg_len;
    cfg.validate();
    return cfg;
}

RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

std::string to_ini(const RunConfig& cfg) {
    RunConfig copy = cfg;
    std::string out;
    for (const auto& sec : bind(copy)) {
        out += "[" + sec.name + "]\n";
        for (const auto& f : sec.fields) out += f.key + " = " + f.get() + "\n";
        out += "\n";
    }
    return out;
}

}  // namespace mdfg::config
