#pragma once

#include "paradiff/params.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace paradiff {

// Binary model container shared by the denoiser and the guidance models.
//
//   "PDCK" | u32 version | u64 n | n bytes of JSON metadata
//   u32 tensor count, then per tensor:
//     u32 name length | name | u64 rows | u64 cols | rows*cols f64, row-major
//
// All integers and floats little-endian.
struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

// Parameters are stored as "<prefix><name>".
void store_params(Archive& archive, const ParamSet& params, const std::string& prefix = "");
// Overwrites every parameter from the archive; shapes must match.
void restore_params(const Archive& archive, ParamSet& params, const std::string& prefix = "");

}  // namespace paradiff
