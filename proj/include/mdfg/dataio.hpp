#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdfg/common.hpp"

namespace mdfg::dataio {

// On-disk codes of the RDS container.
enum class CellKind : std::uint8_t { pure_clutter = 0, primary_target = 1, secondary_target = 2 };

struct ComplexSeries {
    CVec samples;
    double prf_hz = 1000.0;
    std::uint32_t cell_id = 0;
    CellKind cell_kind = CellKind::pure_clutter;
};

struct EchoSegment {
    CVec samples;
    Label label = Label::clutter;
    std::uint32_t source_cell = 0;
    std::size_t start_index = 0;
};

struct SegmentationConfig {
    std::size_t seg_len = 512;
    std::size_t stride_clutter = 512;
    std::size_t stride_target = 512;

    void validate() const;
};

struct SplitSpec {
    std::vector<std::size_t> pretrain_ids;
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> val_ids;
    std::vector<std::size_t> test_ids;
    std::uint64_t seed = 0;
};

/// RDS v1, little-endian:
///   "RDS1" | u32 version | u32 cell_count |
///   per cell: u32 cell_id | u8 cell_kind | f64 prf_hz | u64 sample_count | (f32 I, f32 Q) * count
/// Samples are stored as f32, so values survive a round trip bit-exactly once quantized.
std::vector<ComplexSeries> read_rds(const std::filesystem::path& path);
std::vector<ComplexSeries> parse_rds(const std::vector<std::uint8_t>& bytes);
void write_rds(const std::filesystem::path& path, const std::vector<ComplexSeries>& cells);
std::vector<std::uint8_t> encode_rds(const std::vector<ComplexSeries>& cells);

// Rounds every sample to what the container stores.
CVec quantize_f32(const CVec& samples);

/// Windows at 0, stride, 2*stride, ... while start + seg_len <= length.
/// Clutter cells use stride_clutter, primary target cells stride_target; secondary cells yield nothing.
std::vector<EchoSegment> segment(const ComplexSeries& series, const SegmentationConfig& cfg);

// floor((n - seg_len) / stride) + 1
std::size_t segment_count(std::size_t n_samples, std::size_t seg_len, std::size_t stride);

/// Largest stride in [1, seg_len] that still yields at least target_count windows.
std::size_t plan_oversampling(std::size_t n_samples_available, std::size_t seg_len,
                              std::size_t target_count);

/// Stratified 80% pretrain draw per class, then the remainder split 2:2:1 into
/// train/val/test with val filled from clutter only; leftovers go to train/test at 2:1.
SplitSpec make_splits(const std::vector<EchoSegment>& segments, std::uint64_t seed);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);

}  // namespace mdfg::dataio
