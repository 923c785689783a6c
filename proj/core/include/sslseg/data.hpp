#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sslseg/common.hpp"

namespace sslseg {

/// One subject: a stack of single-channel slices in [0,1], optionally with
/// per-pixel integer label maps.
struct Volume {
    std::string subject_id;
    int slices = 0;
    int height = 0;
    int width = 0;
    std::vector<float> voxels;    // [S,H,W] row-major
    std::vector<uint8_t> labels;  // [S,H,W], empty when unlabeled

    bool has_labels() const { return !labels.empty(); }
    int64_t slice_stride() const { return static_cast<int64_t>(height) * width; }

    std::span<const float> slice(int s) const {
        return {voxels.data() + s * slice_stride(), static_cast<size_t>(slice_stride())};
    }
    std::span<const uint8_t> label_slice(int s) const {
        return {labels.data() + s * slice_stride(), static_cast<size_t>(slice_stride())};
    }
};

/// One labeled 2D training sample.
struct SegSample {
    int height = 0;
    int width = 0;
    std::vector<float> image;     // [H,W] in [0,1]
    std::vector<uint8_t> labels;  // [H,W], values < num_classes
};

/// File-format failures carry a kind so callers (and tests) can tell a bad
/// magic string from a short payload from inconsistent dimensions.
struct FormatError : std::runtime_error {
    enum class Kind { bad_magic, truncated, dim_mismatch, bad_header, io };

    FormatError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

/// Min-max normalization of a raw buffer to [0,1]. A constant volume maps
/// to all zeros with a warning on stderr. Non-finite input is rejected.
std::vector<float> normalize_unit(std::span<const float> raw);

/// SSLVOL1 container: one UTF-8 header line
///   SSLVOL1 subject=<id> dims=<S>x<H>x<W> dtype=f32 labels=<0|1>
/// then a newline, S*H*W little-endian 32-bit floats row-major, and, when
/// labels=1, S*H*W unsigned bytes. Round-trips are bit-exact. Writing is
/// atomic: a temp file is renamed over the target on completion.
void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

}  // namespace sslseg
