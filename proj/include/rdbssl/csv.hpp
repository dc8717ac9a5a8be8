#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rdbssl::csv {

using Row = std::vector<std::string>;

// RFC-4180: comma separated, double-quote quoting with "" escapes, CRLF or LF
// line endings, embedded newlines inside quoted fields.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string format_field(std::string_view field);
std::string format_row(const Row& row);

}  // namespace rdbssl::csv
