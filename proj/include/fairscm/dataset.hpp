#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fairscm {

/// Row-major numeric table with named columns.
struct Dataset {
    enum class Provenance { Sampled, Ingested };

    std::vector<std::string> columns;
    std::vector<double> values; // n_rows * columns.size()
    size_t n_rows = 0;
    Provenance provenance = Provenance::Ingested;
    std::optional<uint64_t> seed; // set for sampled datasets

    size_t n_cols() const { return columns.size(); }
    int column_index(const std::string& name) const; // -1 when absent
    bool has_column(const std::string& name) const { return column_index(name) >= 0; }

    double at(size_t row, size_t col) const { return values[row * columns.size() + col]; }
    double& at(size_t row, size_t col) { return values[row * columns.size() + col]; }
    double at(size_t row, const std::string& column) const;

    std::vector<double> column(const std::string& name) const;

    void append_row(const std::vector<double>& row);
};

/// Strict CSV reader: header row, comma separators, '.' decimal point.
/// Missing or non-numeric cells are hard errors naming row and column.
Dataset read_csv(std::istream& in, const std::string& source_name = "<stream>");
Dataset read_csv_file(const std::string& path);

void write_csv(const Dataset& d, std::ostream& out);
void write_csv_file(const Dataset& d, const std::string& path);

} // namespace fairscm
