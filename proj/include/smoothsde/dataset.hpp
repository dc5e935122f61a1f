#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace smoothsde {

/// Rows [begin, end) belonging to one time series.
struct SeriesRange {
    std::string id;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

/// Irregular time series table: (ID, time, responses, covariates).
///
/// Rows are grouped by series and strictly increasing in time within each
/// series. Empty numeric cells are stored as NaN.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<std::string> ids, std::vector<double> times);

    std::size_t size() const { return time_.size(); }
    const std::vector<std::string>& ids() const { return id_; }
    const std::vector<double>& times() const { return time_; }

    void add_numeric(const std::string& name, std::vector<double> values);
    void add_text(const std::string& name, std::vector<std::string> values);

    bool has_column(const std::string& name) const;
    bool is_numeric(const std::string& name) const;
    /// Numeric column; throws NameError if absent or non-numeric.
    const std::vector<double>& numeric(const std::string& name) const;
    /// String view of any column (including "ID"), for grouping factors.
    std::vector<std::string> factor(const std::string& name) const;
    const std::vector<std::string>& column_names() const { return names_; }

    std::vector<SeriesRange> series() const;

    /// Checks grouping and strict time ordering; throws DataError naming rows.
    void validate() const;

    /// Subset of rows, in the given order.
    Dataset select_rows(const std::vector<std::size_t>& rows) const;

private:
    std::vector<std::string> id_;
    std::vector<double> time_;
    std::vector<std::string> names_;
    std::map<std::string, std::vector<double>> numeric_;
    std::map<std::string, std::vector<std::string>> text_;
};

/// Reads a header-first CSV with at least "ID" and "time" columns.
Dataset ingest_csv(const std::string& path);

/// Writes ID,time,<columns...> with 17 significant digits.
void write_csv(const Dataset& data, const std::string& path);

/// Formats a double with 17 significant digits in the classic locale.
std::string format_double(double x);

/// Write `content` to `path` atomically (temp file then rename).
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace smoothsde
