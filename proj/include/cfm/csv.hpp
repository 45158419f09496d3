#pragma once

// Point sets as CSV: a header row x0,x1,... followed by one row per point.

#include "cfm/autodiff.hpp"

#include <filesystem>
#include <string>

namespace cfm {

std::string format_points_csv(const Mat& points);
Mat parse_points_csv(const std::string& text);

void write_points_csv(const std::filesystem::path& path, const Mat& points);
// Throws IoError if unreadable or malformed.
Mat read_points_csv(const std::filesystem::path& path);

// Writes text to a file, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace cfm
