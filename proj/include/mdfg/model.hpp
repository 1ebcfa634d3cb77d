#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mdfg/tensor.hpp"

namespace mdfg::model {

// Desk-scale stand-in for the 1D-ResNet50 encoder plus the heads that sit on it.
struct ModelConfig {
    std::size_t seg_len = 512;
    std::size_t blocks = 4;
    std::size_t channels = 32;
    std::size_t kernel = 7;
    std::size_t repr_dim = 256;
    std::size_t hidden = 256;     // projection head hidden width
    std::size_t proj_dim = 128;   // p
    std::size_t embed_dim = 64;   // m
    std::size_t shallow_dim = 6;
    std::size_t classes = 2;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

enum class Group : std::uint8_t { encoder = 0, head = 1, align = 2, classifier = 3 };
inline constexpr std::size_t kNumGroups = 4;
const char* to_string(Group g);

struct ParamEntry {
    std::string name;
    Group group = Group::encoder;
    bool is_bias = false;
    tensor::Tensor value;
};

struct ModelParams {
    ModelConfig config;
    std::vector<ParamEntry> entries;
    std::array<bool, kNumGroups> frozen{};

    const ParamEntry& at(const std::string& name) const;
    ParamEntry& at(const std::string& name);
    std::size_t index_of(const std::string& name) const;
    bool is_frozen(Group g) const { return frozen[static_cast<std::size_t>(g)]; }
    void set_frozen(Group g, bool f) { frozen[static_cast<std::size_t>(g)] = f; }
    std::size_t parameter_count(Group g) const;
    std::size_t parameter_count() const;
};

/// Uniform(-k, k) weights with k = 1/sqrt(fan_in), zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Parameters registered as leaves on a tape; frozen groups are untracked.
class Bound {
public:
    Bound(tensor::Tape& tape, const ModelParams& params);

    tensor::Var operator[](const std::string& name) const;
    tensor::Var var(std::size_t i) const { return vars_[i]; }
    const ModelParams& params() const { return *params_; }
    tensor::Tape& tape() const { return *tape_; }

    // Gradient per entry after backward (zeros for untracked ones).
    std::vector<tensor::Tensor> grads() const;

private:
    tensor::Tape* tape_;
    const ModelParams* params_;
    std::vector<tensor::Var> vars_;
};

/// (B, N) amplitudes -> (B, repr_dim). Strided stem, residual blocks with stride-2
/// transitions between them, global average pool, final linear map.
tensor::Var encode(const Bound& p, tensor::Var x);

// z = W2 ReLU(W1 x + b1) + b2, row convention
tensor::Var project(const Bound& p, tensor::Var x);

// d = W_d^T z / |W_d^T z| per row
tensor::Var deep_embed(const Bound& p, tensor::Var z);

// s = W_s^T f_s / |W_s^T f_s| per row
tensor::Var shallow_embed(const Bound& p, tensor::Var fs);

tensor::Var classify(const Bound& p, tensor::Var z);

/// Checkpoint: "MDFG" | u32 version | u32 len + config JSON | u32 count |
/// per parameter: u32 len + name | u8 group | u8 is_bias | u32 rank | u64 dims | f64 data |
/// u32 group count | per group: u32 len + name | u8 frozen
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const std::string& text);

}  // namespace mdfg::model
