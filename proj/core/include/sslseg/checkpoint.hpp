#pragma once

#include <filesystem>

#include "sslseg/unet.hpp"

namespace sslseg {

/// SSLCKPT1 container: a header line with the model configuration and the
/// active head mode, one "name 4x4x3x3" line per parameter, then all
/// parameter values as little-endian 32-bit floats in listed order.
/// Round-trips are bit-exact.
void save_checkpoint(UNetF& model, const std::filesystem::path& path);

/// Rebuilds the model from the stored configuration and fills every
/// parameter. Name or shape disagreements raise FormatError::dim_mismatch
/// naming the parameter and both shapes.
UNetF load_checkpoint(const std::filesystem::path& path);

}  // namespace sslseg
