#pragma once

#include <string>
#include <vector>

namespace secc {

// Shortest representation that round-trips a double exactly (17 significant digits).
std::string fmt17(double v);

// Fixed 6-significant-digit form for plot coordinates.
std::string fmt6(double v);

std::vector<std::string> split(const std::string& s, char sep);

// Strict double/int parsing; throws ValidationError naming `what` on garbage.
double parse_double(const std::string& s, const std::string& what);
long parse_long(const std::string& s, const std::string& what);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace secc
