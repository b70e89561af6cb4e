#pragma once

#include <filesystem>
#include <string>

#include "lagsight/train.hpp"

namespace lagsight {

// JSON document:
//   {"format": "lagsight-checkpoint", "version": 1, "model_kind": ...,
//    "model_config": {...}, "train_config": {...}, "seed": ...,
//    "inputs": [...], "target": ..., "normalizer": {...},
//    "parameter_count": N,
//    "parameters": [{"name": ..., "shape": [r, c], "data": [...]}, ...],
//    "best_epoch": e, "history": [{"epoch", "train_rmse", "val_rmse"}, ...]}
// Doubles are written in shortest round-trip form, so a reload reproduces
// every parameter bit for bit.
std::string checkpoint_to_string(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the serialized document, as 16 hex digits.
std::string checkpoint_hash(const Checkpoint& checkpoint);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lagsight
