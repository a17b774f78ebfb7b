#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmem/model.hpp"

namespace pmem {

// Binary checkpoint layout:
//   magic "PMEM" | version u32 | array count u32
//   per array: name (u32 length + bytes) | rank u32 | dims i64... | offset u64
//   meta block: u64 length + UTF-8 JSON (vocab, boundaries, labels, history)
//   payload: little-endian f64 data for all arrays, in manifest order
//   trailer: u32 CRC32 of the payload region
// Offsets are relative to the payload start. Errors are reported with
// distinct kinds: ckpt_io, ckpt_magic, ckpt_version, ckpt_format,
// ckpt_integrity, ckpt_shape.
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointExtras {
    std::vector<std::string> labels;
    std::vector<std::string> domain_history;
    uint64_t seed = 0;
    std::string method;
};

struct NamedArray {
    std::string name;
    Tensor tensor;
};

struct LoadedCheckpoint {
    uint32_t version = 0;
    std::vector<NamedArray> arrays;
    ModelConfig config;
    std::vector<std::string> vocab_tokens;
    std::vector<int64_t> boundaries;
    CheckpointExtras extras;

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(Model& model, const CheckpointExtras& extras, const std::string& path);

LoadedCheckpoint read_checkpoint(const std::string& path);

// Rebuilds a model with exactly the stored shapes and vocabulary.
Model model_from_checkpoint(const LoadedCheckpoint& ckpt);

// Superset load: every stored array must fit elementwise inside the matching
// parameter and is placed in its leading (upper-left) block; the rest of the
// parameter keeps its current values. The stored vocabulary must be a prefix
// of the model's vocabulary.
void load_into_model(const LoadedCheckpoint& ckpt, Model& model);

}  // namespace pmem
