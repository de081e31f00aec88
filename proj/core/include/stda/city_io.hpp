#pragma once

#include <stda/traffic_graph.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace stda {

/// Paths of the three-file city format.
struct CityFiles {
    std::filesystem::path speed;     ///< CSV: header of node ids, ISO-8601 timestamp column
    std::filesystem::path adjacency; ///< CSV rows src,dst,weight (0-based)
    std::filesystem::path meta;      ///< JSON {city_id, interval_minutes, n_nodes}

    /// speed.csv / adjacency.csv / meta.json inside `dir`.
    static CityFiles in_directory(const std::filesystem::path& dir);
};

/// Loads and validates a city. Zero or empty speed cells are marked missing.
/// Errors carry the file name and line number.
CityData load_city(const CityFiles& files);
CityData load_city(const std::filesystem::path& speed_file, const std::filesystem::path& adjacency_file,
                   const std::filesystem::path& meta_file);

/// Writes the three files; the inverse of load_city up to the 6-decimal
/// rounding of speeds.
void write_city(const CityData& city, const CityFiles& files);

/// "YYYY-MM-DDTHH:MM[:SS]" (a space may replace the T) to epoch minutes.
std::int64_t parse_iso8601_minutes(std::string_view text);
std::string format_iso8601_minutes(std::int64_t minutes);

} // namespace stda
