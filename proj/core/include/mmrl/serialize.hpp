#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mmrl/tensor.hpp"

namespace mmrl {

// MMTF tensor file, fixed little-endian layout:
//   bytes 0-3   magic "MMTF"
//   u32         version (= 1)
//   u32         ndim
//   ndim x u32  extents
//   f64 x prod  payload, row-major
//   u32         CRC32 (IEEE) of the payload bytes
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in, std::size_t stream_base_offset = 0);
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

/// Architecture descriptor (JSON text) plus named parameter tensors.
struct ModelBundle {
    std::string architecture;  // JSON object; must contain a "kind" key
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor& param(const std::string& name) const;
};

// MMDL bundle file: magic "MMDL", u32 version, length-prefixed UTF-8 JSON
// descriptor, then (length-prefixed name, MMTF block) per parameter, and a
// trailing u32 CRC32 covering every preceding byte.
void save_model(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_model(const std::filesystem::path& path);

std::string bundle_kind(const ModelBundle& bundle);

}  // namespace mmrl
