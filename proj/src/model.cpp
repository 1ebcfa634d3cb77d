#include "mdfg/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <nlohmann/json.hpp>

namespace mdfg::model {

using tensor::Shape;
using tensor::Tensor;
using tensor::Var;
namespace ts = mdfg::tensor;

void ModelConfig::validate() const {
    for (auto v : {seg_len, blocks, channels, kernel, repr_dim, hidden, proj_dim, embed_dim, shallow_dim, classes}) {
        if (v < 1) throw Error(ErrorCode::ConfigError, "model dimensions must all be >= 1");
    }
    if (kernel % 2 == 0) throw Error(ErrorCode::ConfigError, "encoder kernel must be odd");
    if (seg_len < (std::size_t{2} << blocks)) {
        throw Error(ErrorCode::ConfigError, "seg_len too short for " + std::to_string(blocks) + " downsampling stages");
    }
}

const char* to_string(Group g) {
    switch (g) {
        case Group::encoder: return "encoder";
        case Group::head: return "head";
        case Group::align: return "align";
        case Group::classifier: return "classifier";
    }
    return "?";
}

const ParamEntry& ModelParams::at(const std::string& name) const { return entries[index_of(name)]; }
ParamEntry& ModelParams::at(const std::string& name) { return entries[index_of(name)]; }

std::size_t ModelParams::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name == name) return i;
    }
    throw Error(ErrorCode::InvalidArgument, "no parameter named '" + name + "'");
}

std::size_t ModelParams::parameter_count(Group g) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.group == g) n += e.value.size();
    }
    return n;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    std::mt19937_64 rng(mix_seed(seed, 0x1417u));

    auto weight = [&](std::string name, Group g, Shape shape, std::size_t fan_in) {
        const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-k, k);
        Tensor t(std::move(shape), 0.0);
        for (auto& v : t.data) v = u(rng);
        p.entries.push_back({std::move(name), g, false, std::move(t)});
    };
    auto bias = [&](std::string name, Group g, std::size_t n) {
        p.entries.push_back({std::move(name), g, true, Tensor(Shape{n}, 0.0)});
    };

    const std::size_t c = cfg.channels, k = cfg.kernel;
    weight("enc.stem.w", Group::encoder, {c, 1, k}, k);
    bias("enc.stem.b", Group::encoder, c);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string pre = "enc.block" + std::to_string(b);
        if (b > 0) {
            weight("enc.down" + std::to_string(b) + ".w", Group::encoder, {c, c, 3}, c * 3);
            bias("enc.down" + std::to_string(b) + ".b", Group::encoder, c);
        }
        weight(pre + ".conv1.w", Group::encoder, {c, c, k}, c * k);
        bias(pre + ".conv1.b", Group::encoder, c);
        weight(pre + ".conv2.w", Group::encoder, {c, c, k}, c * k);
        bias(pre + ".conv2.b", Group::encoder, c);
    }
    weight("enc.fc.w", Group::encoder, {c, cfg.repr_dim}, c);
    bias("enc.fc.b", Group::encoder, cfg.repr_dim);

    weight("head.w1", Group::head, {cfg.repr_dim, cfg.hidden}, cfg.repr_dim);
    bias("head.b1", Group::head, cfg.hidden);
    weight("head.w2", Group::head, {cfg.hidden, cfg.proj_dim}, cfg.hidden);
    bias("head.b2", Group::head, cfg.proj_dim);

    weight("align.wd", Group::align, {cfg.proj_dim, cfg.embed_dim}, cfg.proj_dim);
    weight("align.ws", Group::align, {cfg.shallow_dim, cfg.embed_dim}, cfg.shallow_dim);

    weight("cls.w", Group::classifier, {cfg.proj_dim, cfg.classes}, cfg.proj_dim);
    bias("cls.b", Group::classifier, cfg.classes);
    return p;
}

Bound::Bound(tensor::Tape& tape, const ModelParams& params) : tape_(&tape), params_(&params) {
    vars_.reserve(params.entries.size());
    for (const auto& e : params.entries) vars_.push_back(tape.leaf(e.value, !params.is_frozen(e.group)));
}

Var Bound::operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }

std::vector<Tensor> Bound::grads() const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(tape_->grad(v));
    return out;
}

Var encode(const Bound& p, Var x) {
    const ModelConfig& cfg = p.params().config;
    const Shape& s = x.shape();
    if (s.size() != 2 || s[1] != cfg.seg_len) {
        throw Error(ErrorCode::ShapeMismatch, "encode expects (B, " + std::to_string(cfg.seg_len) + "), got " + ts::shape_str(s));
    }
    const std::size_t pad = cfg.kernel / 2;
    Var h = ts::reshape(x, Shape{s[0], 1, s[1]});
    h = ts::relu(ts::conv1d(h, p["enc.stem.w"], p["enc.stem.b"], 2, pad));
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        if (b > 0) {
            const std::string d = "enc.down" + std::to_string(b);
            h = ts::relu(ts::conv1d(h, p[d + ".w"], p[d + ".b"], 2, 1));
        }
        const std::string pre = "enc.block" + std::to_string(b);
        Var y = ts::relu(ts::conv1d(h, p[pre + ".conv1.w"], p[pre + ".conv1.b"], 1, pad));
        y = ts::conv1d(y, p[pre + ".conv2.w"], p[pre + ".conv2.b"], 1, pad);
        h = ts::relu(ts::add(y, h));
    }
    Var pooled = ts::mean(h, 2);
    return ts::bias_add(ts::matmul(pooled, p["enc.fc.w"]), p["enc.fc.b"]);
}

Var project(const Bound& p, Var x) {
    Var h = ts::relu(ts::bias_add(ts::matmul(x, p["head.w1"]), p["head.b1"]));
    return ts::bias_add(ts::matmul(h, p["head.w2"]), p["head.b2"]);
}

Var deep_embed(const Bound& p, Var z) { return ts::l2_normalize(ts::matmul(z, p["align.wd"]), 1); }

Var shallow_embed(const Bound& p, Var fs) { return ts::l2_normalize(ts::matmul(fs, p["align.ws"]), 1); }

Var classify(const Bound& p, Var z) { return ts::bias_add(ts::matmul(z, p["cls.w"]), p["cls.b"]); }

std::string config_to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["seg_len"] = c.seg_len;
    j["blocks"] = c.blocks;
    j["channels"] = c.channels;
    j["kernel"] = c.kernel;
    j["repr_dim"] = c.repr_dim;
    j["hidden"] = c.hidden;
    j["proj_dim"] = c.proj_dim;
    j["embed_dim"] = c.embed_dim;
    j["shallow_dim"] = c.shallow_dim;
    j["classes"] = c.classes;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ModelConfig c;
        c.seg_len = j.at("seg_len");
        c.blocks = j.at("blocks");
        c.channels = j.at("channels");
        c.kernel = j.at("kernel");
        c.repr_dim = j.at("repr_dim");
        c.hidden = j.at("hidden");
        c.proj_dim = j.at("proj_dim");
        c.embed_dim = j.at("embed_dim");
        c.shallow_dim = j.at("shallow_dim");
        c.classes = j.at("classes");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("checkpoint config: ") + e.what());
    }
}

namespace {

constexpr char kMagic[4] = {'M', 'D', 'F', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) {
            throw Error(ErrorCode::TruncatedPayload, "checkpoint ends at byte offset " + std::to_string(pos_));
        }
    }
    const std::vector<std::uint8_t>& b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    put_string(out, config_to_json(params.config));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries.size()));
    for (const auto& e : params.entries) {
        put_string(out, e.name);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(e.group));
        put<std::uint8_t>(out, e.is_bias ? 1 : 0);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.shape.size()));
        for (auto d : e.value.shape) put<std::uint64_t>(out, d);
        for (double v : e.value.data) put<double>(out, v);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(kNumGroups));
    for (std::size_t g = 0; g < kNumGroups; ++g) {
        put_string(out, to_string(static_cast<Group>(g)));
        put<std::uint8_t>(out, params.frozen[g] ? 1 : 0);
    }
    return out;
}

ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::MalformedHeader, "checkpoint magic \"MDFG\" not found at byte offset 0");
    }
    Reader r(bytes);
    r.get<std::uint32_t>();
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) throw Error(ErrorCode::UnknownVersion, "checkpoint version " + std::to_string(version) + " at byte offset 4");
    ModelParams p;
    p.config = config_from_json(r.get_string());
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamEntry e;
        e.name = r.get_string();
        const auto g = r.get<std::uint8_t>();
        if (g >= kNumGroups) throw Error(ErrorCode::MalformedHeader, "bad group id at byte offset " + std::to_string(r.pos() - 1));
        e.group = static_cast<Group>(g);
        e.is_bias = r.get<std::uint8_t>() != 0;
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint64_t>();
        const std::size_t n = ts::numel(shape);
        if (n > r.remaining() / 8) throw Error(ErrorCode::TruncatedPayload, "parameter '" + e.name + "' data cut short at byte offset " + std::to_string(r.pos()));
        std::vector<double> data(n);
        for (auto& v : data) v = r.get<double>();
        e.value = Tensor(std::move(shape), std::move(data));
        p.entries.push_back(std::move(e));
    }
    const auto groups = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < groups; ++i) {
        const std::string name = r.get_string();
        const bool frozen = r.get<std::uint8_t>() != 0;
        for (std::size_t g = 0; g < kNumGroups; ++g) {
            if (name == to_string(static_cast<Group>(g))) p.frozen[g] = frozen;
        }
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace mdfg::model
