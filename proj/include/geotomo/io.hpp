#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace geotomo {

// Shortest decimal form that round-trips the double; locale-free and
// deterministic, so repeated runs emit byte-identical artifacts.
std::string format_double(double x);

// RFC-4180 field quoting; quotes are added only when the field needs them.
std::string csv_quote(const std::string& field);

using CsvRows = std::vector<std::vector<std::string>>;

// Rows joined by commas and LF newlines, every field quoted per RFC-4180.
std::string csv_encode(const CsvRows& rows);

// Full RFC-4180 reader: quoted fields, doubled-quote escapes, CR LF or LF
// line breaks.  A final newline does not produce an empty trailing row.
CsvRows csv_decode(const std::string& text);

// Whole-file helpers; throw Error when the path cannot be opened.
void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Two-space indent, sorted keys, trailing newline.
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

} // namespace geotomo
