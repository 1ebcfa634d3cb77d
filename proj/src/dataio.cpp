#include "mdfg/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include <nlohmann/json.hpp>

namespace mdfg::dataio {

namespace {

static_assert(std::endian::native == std::endian::little, "RDS I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'D', 'S', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kCellHeaderBytes = 4 + 1 + 8 + 8;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    template <typename T>
    T get(ErrorCode on_short, const char* what) {
        if (remaining() < sizeof(T)) {
            throw Error(on_short, std::string("need ") + std::to_string(sizeof(T)) + " bytes for " + what +
                                      " at byte offset " + std::to_string(pos_));
        }
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<ComplexSeries> parse_rds(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::MalformedHeader, "magic \"RDS1\" not found at byte offset 0");
    }
    Reader r(bytes);
    r.get<std::uint32_t>(ErrorCode::MalformedHeader, "magic");
    const auto version = r.get<std::uint32_t>(ErrorCode::MalformedHeader, "version");
    if (version != kVersion) {
        throw Error(ErrorCode::UnknownVersion,
                    "version " + std::to_string(version) + " at byte offset 4");
    }
    const auto cell_count = r.get<std::uint32_t>(ErrorCode::MalformedHeader, "cell_count");

    std::vector<ComplexSeries> cells;
    for (std::uint32_t c = 0; c < cell_count; ++c) {
        if (r.remaining() < kCellHeaderBytes) {
            throw Error(ErrorCode::TruncatedPayload, "cell " + std::to_string(c) +
                                                         " header cut short at byte offset " +
                                                         std::to_string(r.pos()));
        }
        ComplexSeries s;
        s.cell_id = r.get<std::uint32_t>(ErrorCode::TruncatedPayload, "cell_id");
        const std::size_t kind_at = r.pos();
        const auto kind = r.get<std::uint8_t>(ErrorCode::TruncatedPayload, "cell_kind");
        if (kind > 2) {
            throw Error(ErrorCode::MalformedHeader,
                        "cell_kind " + std::to_string(kind) + " at byte offset " + std::to_string(kind_at));
        }
        s.cell_kind = static_cast<CellKind>(kind);
        const std::size_t prf_at = r.pos();
        s.prf_hz = r.get<double>(ErrorCode::TruncatedPayload, "prf_hz");
        if (!(s.prf_hz > 0.0) || !std::isfinite(s.prf_hz)) {
            throw Error(ErrorCode::MalformedHeader, "prf_hz must be positive at byte offset " + std::to_string(prf_at));
        }
        const std::size_t count_at = r.pos();
        const auto count = r.get<std::uint64_t>(ErrorCode::TruncatedPayload, "sample_count");
        if (count == 0) {
            throw Error(ErrorCode::MalformedHeader, "empty cell at byte offset " + std::to_string(count_at));
        }
        if (count > r.remaining() / 8) {
            throw Error(ErrorCode::TruncatedPayload,
                        "cell " + std::to_string(c) + " declares " + std::to_string(count) +
                            " samples but only " + std::to_string(r.remaining()) +
                            " bytes remain at byte offset " + std::to_string(r.pos()));
        }
        s.samples.resize(count);
        for (auto& z : s.samples) {
            const float i = r.get<float>(ErrorCode::TruncatedPayload, "I");
            const float q = r.get<float>(ErrorCode::TruncatedPayload, "Q");
            z = cplx(i, q);
        }
        cells.push_back(std::move(s));
    }
    if (r.remaining() != 0) {
        throw Error(ErrorCode::MalformedHeader,
                    std::to_string(r.remaining()) + " trailing bytes at byte offset " + std::to_string(r.pos()));
    }
    return cells;
}

std::vector<ComplexSeries> read_rds(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_rds(bytes);
}

std::vector<std::uint8_t> encode_rds(const std::vector<ComplexSeries>& cells) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cells.size()));
    for (const auto& s : cells) {
        put<std::uint32_t>(out, s.cell_id);
        put<std::uint8_t>(out, static_cast<std::uint8_t>(s.cell_kind));
        put<double>(out, s.prf_hz);
        put<std::uint64_t>(out, s.samples.size());
        for (const auto& z : s.samples) {
            put<float>(out, static_cast<float>(z.real()));
            put<float>(out, static_cast<float>(z.imag()));
        }
    }
    return out;
}

void write_rds(const std::filesystem::path& path, const std::vector<ComplexSeries>& cells) {
    const auto bytes = encode_rds(cells);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CVec quantize_f32(const CVec& samples) {
    CVec out(samples.size());
    std::transform(samples.begin(), samples.end(), out.begin(), [](const cplx& z) {
        return cplx(static_cast<float>(z.real()), static_cast<float>(z.imag()));
    });
    return out;
}

void SegmentationConfig::validate() const {
    if (seg_len < 8) throw Error(ErrorCode::InvalidArgument, "seg_len must be >= 8");
    for (auto s : {stride_clutter, stride_target}) {
        if (s < 1 || s > seg_len) throw Error(ErrorCode::InvalidArgument, "stride must lie in [1, seg_len]");
    }
}

std::size_t segment_count(std::size_t n_samples, std::size_t seg_len, std::size_t stride) {
    if (n_samples < seg_len || stride == 0) return 0;
    return (n_samples - seg_len) / stride + 1;
}

std::vector<EchoSegment> segment(const ComplexSeries& series, const SegmentationConfig& cfg) {
    cfg.validate();
    if (series.cell_kind == CellKind::secondary_target) return {};
    if (series.samples.size() < cfg.seg_len) {
        throw Error(ErrorCode::SeriesTooShort, "cell " + std::to_string(series.cell_id) + " has " +
                                                   std::to_string(series.samples.size()) + " samples, need " +
                                                   std::to_string(cfg.seg_len));
    }
    const bool is_target = series.cell_kind == CellKind::primary_target;
    const std::size_t stride = is_target ? cfg.stride_target : cfg.stride_clutter;
    const std::size_t n = segment_count(series.samples.size(), cfg.seg_len, stride);

    std::vector<EchoSegment> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t start = i * stride;
        EchoSegment seg;
        seg.samples.assign(series.samples.begin() + static_cast<std::ptrdiff_t>(start),
                           series.samples.begin() + static_cast<std::ptrdiff_t>(start + cfg.seg_len));
        seg.label = is_target ? Label::target : Label::clutter;
        seg.source_cell = series.cell_id;
        seg.start_index = start;
        out.push_back(std::move(seg));
    }
    return out;
}

std::size_t plan_oversampling(std::size_t n_samples_available, std::size_t seg_len, std::size_t target_count) {
    if (seg_len == 0 || target_count == 0 || n_samples_available < seg_len) {
        throw Error(ErrorCode::InvalidArgument, "plan_oversampling needs n >= seg_len and target_count >= 1");
    }
    if (segment_count(n_samples_available, seg_len, 1) < target_count) {
        throw Error(ErrorCode::Unreachable, "stride 1 yields only " +
                                                std::to_string(segment_count(n_samples_available, seg_len, 1)) +
                                                " segments, need " + std::to_string(target_count));
    }
    // count(s) >= target  <=>  (n - N) / s >= target - 1
    if (target_count == 1) return seg_len;
    const std::size_t span = n_samples_available - seg_len;
    return std::clamp<std::size_t>(span / (target_count - 1), 1, seg_len);
}

SplitSpec make_splits(const std::vector<EchoSegment>& segments, std::uint64_t seed) {
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < segments.size(); ++i) {
        by_class[static_cast<int>(segments[i].label)].push_back(i);
    }
    std::mt19937_64 rng(mix_seed(seed, 0x5e11));

    SplitSpec split;
    split.seed = seed;
    std::vector<std::size_t> rest_clutter;
    std::vector<std::size_t> rest;
    for (int c = 0; c < 2; ++c) {
        auto& ids = by_class[c];
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto n_pre = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(ids.size())));
        split.pretrain_ids.insert(split.pretrain_ids.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_pre));
        rest.insert(rest.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_pre), ids.end());
    }
    std::shuffle(rest.begin(), rest.end(), rng);

    const std::size_t r = rest.size();
    const std::size_t n_val = 2 * r / 5;
    std::vector<std::size_t> leftover;
    for (auto id : rest) {
        if (segments[id].label == Label::clutter && split.val_ids.size() < n_val) {
            split.val_ids.push_back(id);
        } else {
            leftover.push_back(id);
        }
    }
    if (split.val_ids.size() < n_val || (n_val == 0 && by_class[0].empty())) {
        throw Error(ErrorCode::InsufficientClutter, "validation quota " + std::to_string(n_val) +
                                                        " but only " + std::to_string(split.val_ids.size()) +
                                                        " clutter segments remain after pretraining draw");
    }
    const auto n_train = static_cast<std::size_t>(std::llround(2.0 * static_cast<double>(leftover.size()) / 3.0));
    split.train_ids.assign(leftover.begin(), leftover.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test_ids.assign(leftover.begin() + static_cast<std::ptrdiff_t>(n_train), leftover.end());

    for (auto* v : {&split.pretrain_ids, &split.train_ids, &split.val_ids, &split.test_ids}) {
        std::sort(v->begin(), v->end());
    }
    return split;
}

std::string split_to_json(const SplitSpec& split) {
    nlohmann::ordered_json j;
    j["seed"] = split.seed;
    j["pretrain_ids"] = split.pretrain_ids;
    j["train_ids"] = split.train_ids;
    j["val_ids"] = split.val_ids;
    j["test_ids"] = split.test_ids;
    return j.dump(1) + "\n";
}

SplitSpec split_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SplitSpec s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.pretrain_ids = j.at("pretrain_ids").get<std::vector<std::size_t>>();
        s.train_ids = j.at("train_ids").get<std::vector<std::size_t>>();
        s.val_ids = j.at("val_ids").get<std::vector<std::size_t>>();
        s.test_ids = j.at("test_ids").get<std::vector<std::size_t>>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedHeader, std::string("split document: ") + e.what());
    }
}

}  // namespace mdfg::dataio
