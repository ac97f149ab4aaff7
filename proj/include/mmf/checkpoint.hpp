#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmf/imputer.hpp"
#include "mmf/tensor.hpp"

namespace mmf {

// On-disk model state. Binary layout: magic "MMF1", version u32, a canonical
// sorted key=value text block, named tensor records (name length, name bytes,
// rank, dims, little-endian float64 payload), then a CRC32 of everything
// before it. Loads are bit-exact.
struct Checkpoint {
    std::uint32_t version = 1;
    std::map<std::string, std::string> config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void set_f64(const std::string& key, double v);
    void set_u64(const std::string& key, std::uint64_t v);
    double get_f64(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool has(const std::string& key) const { return config.count(key) != 0; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Bridges to the model: dims and normalization stats travel in config keys
// (model.*, data.*), parameters as named tensors.
Checkpoint checkpoint_from_params(const ModelParams& params, double norm_mean,
                                  double norm_std);
ModelParams params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace mmf
