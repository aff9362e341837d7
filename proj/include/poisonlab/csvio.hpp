#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace poisonlab {

// All CSV floats go through this: fixed 12-significant-digit formatting so a
// rerun with the same config is byte-identical.
inline std::string fmt_g12(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    return std::string(buf);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Minimal reader for the plain comma-separated files this project consumes:
// no quoting, optional header handled by the caller. Cells are whitespace- and
// CR-trimmed. Blank lines are skipped.
std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path);

} // namespace poisonlab
