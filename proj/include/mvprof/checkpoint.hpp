#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "mvprof/tensor.hpp"

namespace mvprof {

// Binary checkpoint layout (all integers little-endian u32, floats f64 LE):
//   magic "SKF1" | version | config-json length | config-json bytes |
//   entry count | per entry: name length, name bytes, rank, dims..., data.
// Version mismatches are rejected, never migrated.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct LoadedCheckpoint {
    nlohmann::json config;
    std::vector<NamedTensor> entries;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& config,
                     const ParamList& params);

// Validates magic, version and the shape table; truncation and garbage fail
// with the offending byte offset.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies saved values into the (already constructed) parameter list; every
// parameter must be present with the exact shape.
void restore_params(const LoadedCheckpoint& ckpt, const ParamList& params);

} // namespace mvprof
