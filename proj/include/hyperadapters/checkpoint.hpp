#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "hyperadapters/tape.hpp"

namespace hyperadapters {

/// Binary container: magic, a free-form header (JSON by convention), then
/// named tensors as raw little-endian doubles. Values round-trip bitwise.
struct Checkpoint {
  std::string header;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& header, const ParameterList& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `params` by name. Throws if a parameter is
/// missing or has a different shape.
void restore_parameters(const Checkpoint& ckpt, const ParameterList& params);

}  // namespace hyperadapters
