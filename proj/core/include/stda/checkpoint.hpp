#pragma once

#include <stda/param_set.hpp>

#include <filesystem>
#include <string>

namespace stda {

inline constexpr int kCheckpointFormatVersion = 1;

/// Binary container: magic "STDAPRM\0", u32 version, u64 entry count, then per
/// entry u32 name length, name bytes, u32 rank, u64 dims, raw little-endian
/// doubles. Round-trips bit-exactly.
void save_params_binary(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params_binary(const std::filesystem::path& path);

/// JSON container {"format_version", "params": [{"name","shape","values"}]}.
std::string params_to_json(const ParamSet& params);
ParamSet params_from_json(const std::string& text);
void save_params_json(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params_json(const std::filesystem::path& path);

} // namespace stda
