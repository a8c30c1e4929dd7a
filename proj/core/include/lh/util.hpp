#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lh {

std::string to_lower(std::string_view text);
std::string to_upper(std::string_view text);
std::string_view trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_icase(std::string_view text, std::string_view prefix);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);
/// Strict full-string parse; throws lh::Error(parse) on trailing junk.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

/// RFC 4180 reader. Rows keep their field count; blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_field(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Root of the shipped data tree (taxonomy, vocabulary, templates, models).
/// Honors LH_SHARE_DIR, then falls back to the build-time location.
std::filesystem::path share_dir();

}  // namespace lh
