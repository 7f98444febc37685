#pragma once

#include <filesystem>

#include "mossda/model.hpp"

namespace mossda {

// Container format: magic + JSON manifest (backbone spec, dims, step, seed,
// optimizer step counters) followed by named, shape-prefixed tensors of
// little-endian 32-bit floats. Parameters, batch-norm running statistics,
// and optimizer moments all round-trip bit-exactly.
void save_checkpoint(ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace mossda
