#include "smoothsde/dataset.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "smoothsde/errors.hpp"

namespace smoothsde {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell += c;
        }
    }
    cells.push_back(cell);
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "NA";
    if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

Dataset::Dataset(std::vector<std::string> ids, std::vector<double> times)
    : id_(std::move(ids)), time_(std::move(times)) {
    if (id_.size() != time_.size()) throw DimensionError("ID and time columns differ in length");
}

void Dataset::add_numeric(const std::string& name, std::vector<double> values) {
    if (values.size() != size()) throw DimensionError("column '" + name + "' has wrong length");
    if (!has_column(name)) names_.push_back(name);
    text_.erase(name);
    numeric_[name] = std::move(values);
}

void Dataset::add_text(const std::string& name, std::vector<std::string> values) {
    if (values.size() != size()) throw DimensionError("column '" + name + "' has wrong length");
    if (!has_column(name)) names_.push_back(name);
    numeric_.erase(name);
    text_[name] = std::move(values);
}

bool Dataset::has_column(const std::string& name) const {
    return name == "ID" || name == "time" || numeric_.count(name) > 0 || text_.count(name) > 0;
}

bool Dataset::is_numeric(const std::string& name) const {
    return name == "time" || numeric_.count(name) > 0;
}

const std::vector<double>& Dataset::numeric(const std::string& name) const {
    if (name == "time") return time_;
    const auto it = numeric_.find(name);
    if (it == numeric_.end()) {
        if (text_.count(name) > 0) throw NameError("column '" + name + "' is not numeric");
        throw NameError("unknown column '" + name + "'");
    }
    return it->second;
}

std::vector<std::string> Dataset::factor(const std::string& name) const {
    if (name == "ID") return id_;
    if (const auto it = text_.find(name); it != text_.end()) return it->second;
    const auto& values = numeric(name);
    std::vector<std::string> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(format_double(v));
    return out;
}

std::vector<SeriesRange> Dataset::series() const {
    std::vector<SeriesRange> out;
    for (std::size_t i = 0; i < size(); ++i) {
        if (out.empty() || id_[i] != out.back().id) out.push_back({id_[i], i, i + 1});
        else out.back().end = i + 1;
    }
    return out;
}

void Dataset::validate() const {
    if (size() == 0) throw DataError("dataset has no rows");
    std::set<std::string> seen;
    std::string prev;
    for (std::size_t i = 0; i < size(); ++i) {
        const std::size_t row = i + 2;  // 1-based with header line
        if (!std::isfinite(time_[i]))
            throw DataError("row " + std::to_string(row) + ": time is missing or not finite");
        if (i == 0 || id_[i] != prev) {
            if (!seen.insert(id_[i]).second)
                throw DataError("row " + std::to_string(row) + ": rows of series '" + id_[i] +
                                "' are not contiguous");
            prev = id_[i];
            continue;
        }
        if (time_[i] == time_[i - 1])
            throw DataError("row " + std::to_string(row) + ": duplicated time " +
                            format_double(time_[i]) + " in series '" + id_[i] + "'");
        if (time_[i] < time_[i - 1])
            throw DataError("rows " + std::to_string(row - 1) + "-" + std::to_string(row) +
                            ": time not increasing in series '" + id_[i] + "'");
    }
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    std::vector<std::string> ids;
    std::vector<double> times;
    for (auto r : rows) {
        ids.push_back(id_.at(r));
        times.push_back(time_.at(r));
    }
    Dataset out(std::move(ids), std::move(times));
    for (const auto& name : names_) {
        if (auto it = numeric_.find(name); it != numeric_.end()) {
            std::vector<double> v;
            for (auto r : rows) v.push_back(it->second[r]);
            out.add_numeric(name, std::move(v));
        } else {
            const auto& src = text_.at(name);
            std::vector<std::string> v;
            for (auto r : rows) v.push_back(src[r]);
            out.add_text(name, std::move(v));
        }
    }
    return out;
}

Dataset ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw DataError("data file '" + path + "' is empty");
    auto header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    std::vector<std::vector<std::string>> cells(header.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto parts = split_csv_line(line);
        if (parts.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(parts.size()));
        for (std::size_t c = 0; c < parts.size(); ++c) cells[c].push_back(trim(parts[c]));
    }
    if (cells.empty() || cells[0].empty()) throw DataError("data file '" + path + "' has no data rows");

    auto find = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<std::ptrdiff_t>(c);
        return -1;
    };
    const auto id_col = find("ID");
    const auto time_col = find("time");
    if (time_col < 0) throw DataError("data file lacks a 'time' column");
    const std::size_t n = cells[0].size();

    std::vector<std::string> ids(n, "1");
    if (id_col >= 0) ids = cells[id_col];
    std::vector<double> times(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!parse_double(cells[time_col][i], times[i]))
            throw DataError("row " + std::to_string(i + 2) + ": time '" + cells[time_col][i] + "' is not numeric");

    Dataset data(std::move(ids), std::move(times));
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (static_cast<std::ptrdiff_t>(c) == id_col || static_cast<std::ptrdiff_t>(c) == time_col) continue;
        std::vector<double> values(n);
        bool numeric = true;
        for (std::size_t i = 0; i < n && numeric; ++i) {
            const auto& s = cells[c][i];
            if (s.empty() || s == "NA" || s == "NaN") values[i] = std::numeric_limits<double>::quiet_NaN();
            else numeric = parse_double(s, values[i]);
        }
        if (numeric) data.add_numeric(header[c], std::move(values));
        else data.add_text(header[c], cells[c]);
    }
    data.validate();
    return data;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ostringstream out;
    out << "ID,time";
    for (const auto& name : data.column_names()) out << ',' << name;
    out << '\n';
    std::vector<std::vector<std::string>> cols;
    for (const auto& name : data.column_names()) cols.push_back(data.factor(name));
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.ids()[i] << ',' << format_double(data.times()[i]);
        for (const auto& col : cols) out << ',' << col[i];
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

}  // namespace smoothsde
