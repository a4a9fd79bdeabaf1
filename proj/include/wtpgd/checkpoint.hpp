#pragma once

#include <filesystem>

#include "wtpgd/model.hpp"

namespace wtpgd {

/// Writes `<manifest>` (key=value text) and a sibling binary blob holding the
/// parameters as little-endian 64-bit floats in manifest order.
///
/// Manifest keys: format, architecture, layers, defence, noise_scale, kwta_k,
/// aa_steps, aa_step_size, parameters (name:dims;...), blob.
void save_checkpoint(const Model& model, const std::filesystem::path& manifest);
Model load_checkpoint(const std::filesystem::path& manifest);

}  // namespace wtpgd
