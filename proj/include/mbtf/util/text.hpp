#pragma once

#include <optional>
#include <string>
#include <vector>

namespace mbtf::util {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Whole-string parses; nullopt when any character is left over.
std::optional<int> to_int(const std::string& s);
std::optional<long long> to_int64(const std::string& s);
std::optional<double> to_double(const std::string& s);

// Shortest "%.17g" rendering, which round-trips any double exactly.
std::string format_double(double v);

}  // namespace mbtf::util
