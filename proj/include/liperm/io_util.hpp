#pragma once

#include <string>
#include <vector>

namespace liperm {

// Shortest decimal that round-trips an IEEE-754 double (up to 17 significant
// digits).
std::string format_g17(double v);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace liperm
