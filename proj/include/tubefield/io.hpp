#ifndef TUBEFIELD_IO_HPP
#define TUBEFIELD_IO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "tubefield/common.hpp"

namespace tubefield {

/// Shortest decimal string that round-trips the double exactly.
std::string format_full(double v);

/// Writes a CSV with a header row and one row per matrix row, full-precision
/// floats. Deterministic byte-for-byte for identical inputs.
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& columns, const Mat& rows);

Mat read_csv(const std::filesystem::path& path, std::vector<std::string>* columns = nullptr);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tubefield

#endif
