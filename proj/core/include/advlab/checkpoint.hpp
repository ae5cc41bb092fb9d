#pragma once

#include <string>

#include "advlab/model.hpp"

namespace advlab {

/// Versioned JSON checkpoint: spec, parameters as nested decimal arrays,
/// metadata. Doubles are serialized losslessly, so load(save(m)) reproduces
/// forward outputs exactly.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace advlab
