#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace trustnbr {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

/// Hex SHA-256 of a byte string / file contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Raw little-endian doubles.
void write_doubles(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<double> read_doubles(const std::filesystem::path& path, std::size_t expected_count);

/// Runs body(i) for i in [0, n) on up to hardware_concurrency threads. Each index is
/// visited exactly once; callers write to per-index slots so output order is fixed.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace trustnbr
