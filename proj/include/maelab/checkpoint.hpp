#pragma once

#include "maelab/vit.hpp"

namespace maelab {

// Serialized named-tensor container: 8-byte magic, u64 header length, JSON
// header (names, shapes, dtype, offsets, resolved config, hash), then a raw
// little-endian f32 payload. Save -> load -> save is bitwise-identical.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;  // kept sorted by name
    std::uint64_t step = 0;
    std::string config_text;  // resolved flat run config
    int format_version = 1;

    void put(const std::string& name, const Tensor& t);
    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a64(const std::string& text);

// Copies matching tensors into the store. Missing names stay at their fresh
// initialization and are returned; shape mismatches throw one error listing
// every offending tensor. Checkpoint-only keys (e.g. "dec.*" from
// pre-training, optimizer state) are ignored.
std::vector<std::string> load_into_store(const Checkpoint& ckpt, ParamStore& store);

}  // namespace maelab
