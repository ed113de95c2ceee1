#include "fairscm/dataset.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fairscm/errors.hpp"
#include "fairscm/expr.hpp"

namespace fairscm {

int Dataset::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
}

double Dataset::at(size_t row, const std::string& column) const {
    int c = column_index(column);
    if (c < 0) throw DataError("no such column: '" + column + "'");
    return at(row, static_cast<size_t>(c));
}

std::vector<double> Dataset::column(const std::string& name) const {
    int c = column_index(name);
    if (c < 0) throw DataError("no such column: '" + name + "'");
    std::vector<double> out(n_rows);
    for (size_t r = 0; r < n_rows; ++r) out[r] = at(r, static_cast<size_t>(c));
    return out;
}

void Dataset::append_row(const std::vector<double>& row) {
    if (row.size() != columns.size()) {
        throw DataError("row width mismatch");
    }
    values.insert(values.end(), row.begin(), row.end());
    ++n_rows;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

Dataset read_csv(std::istream& in, const std::string& source_name) {
    Dataset d;
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(source_name + ": empty input, expected a header row");
    }
    for (const auto& cell : split_commas(line)) {
        std::string name = trim(cell);
        if (name.empty()) {
            throw DataError(source_name + ": empty column name in header");
        }
        if (d.column_index(name) >= 0) {
            throw DataError(source_name + ": duplicate column '" + name + "'");
        }
        d.columns.push_back(name);
    }
    size_t line_no = 1;
    std::vector<double> row(d.columns.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_commas(line);
        if (cells.size() != d.columns.size()) {
            throw DataError(source_name + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(d.columns.size()) +
                            " fields, got " + std::to_string(cells.size()));
        }
        for (size_t i = 0; i < cells.size(); ++i) {
            std::string cell = trim(cells[i]);
            if (cell.empty()) {
                throw DataError(source_name + ":" + std::to_string(line_no) +
                                ": missing value in column '" + d.columns[i] + "'");
            }
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
                throw DataError(source_name + ":" + std::to_string(line_no) +
                                ": non-numeric value '" + cell + "' in column '" +
                                d.columns[i] + "'");
            }
            row[i] = v;
        }
        d.append_row(row);
    }
    d.provenance = Dataset::Provenance::Ingested;
    return d;
}

Dataset read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file: " + path);
    return read_csv(in, path);
}

void write_csv(const Dataset& d, std::ostream& out) {
    for (size_t i = 0; i < d.columns.size(); ++i) {
        if (i) out << ',';
        out << d.columns[i];
    }
    out << '\n';
    for (size_t r = 0; r < d.n_rows; ++r) {
        for (size_t c = 0; c < d.columns.size(); ++c) {
            if (c) out << ',';
            out << format_number(d.at(r, c));
        }
        out << '\n';
    }
}

void write_csv_file(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    write_csv(d, out);
}

} // namespace fairscm
