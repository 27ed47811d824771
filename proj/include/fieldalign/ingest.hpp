#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fieldalign {

/// Reserved cell value standing for an empty cell. The leading NUL byte keeps
/// it out of reach of any decoded UTF-8 text a table could contain.
inline const std::string kNulCell{"\0NUL", 4};

inline bool is_nul(std::string_view cell) noexcept { return cell == kNulCell; }

/// Human-readable rendering of a cell; the NUL sentinel prints as "NUL".
inline std::string_view display_cell(std::string_view cell) noexcept {
    return is_nul(cell) ? std::string_view{"NUL"} : cell;
}

enum class TableFormat { csv, tsv };
enum class NulPolicy { empty_is_nul, skip_empty };

TableFormat parse_table_format(std::string_view s);
NulPolicy parse_nul_policy(std::string_view s);
std::string_view to_string(TableFormat f) noexcept;
std::string_view to_string(NulPolicy p) noexcept;

struct Column {
    std::string name;
    std::vector<std::string> cells;

    std::size_t size() const noexcept { return cells.size(); }
    bool operator==(const Column&) const = default;
};

/// Named columns of string cells. Column names are unique and every column
/// holds at least one cell; both are enforced by every constructing operation.
class DataSource {
public:
    DataSource() = default;
    /// Validates the invariants; throws fieldalign::Error on violation.
    DataSource(std::string name, std::vector<Column> columns);

    const std::string& name() const noexcept { return name_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }
    std::size_t num_columns() const noexcept { return columns_.size(); }
    const Column& column(std::size_t i) const { return columns_.at(i); }

    /// Throws a lookup error for an unknown name.
    const Column& column(std::string_view name) const;
    std::size_t column_index(std::string_view name) const;
    std::vector<std::string> column_names() const;

    /// Largest per-column cell count.
    std::size_t max_cells() const noexcept;
    std::size_t total_cells() const noexcept;

    bool operator==(const DataSource&) const = default;

private:
    std::string name_;
    std::vector<Column> columns_;
};

DataSource load_table(const std::filesystem::path& path, TableFormat format,
                      NulPolicy nul_policy);

/// Same as load_table but parses an in-memory buffer; `name` becomes the
/// DataSource name.
DataSource parse_table(std::string_view text, std::string name, TableFormat format,
                       NulPolicy nul_policy);

/// Keeps cells [start, start + count) of every column. A column left with no
/// cells is an error.
DataSource sample_rows(const DataSource& ds, std::size_t start, std::size_t count);

struct ValueHistogram {
    std::string column;
    /// Descending count, ties by ascending value.
    std::vector<std::pair<std::string, std::size_t>> entries;

    std::size_t total() const noexcept;
    /// count / total for the given value; 0 when absent.
    double fraction(std::string_view value) const noexcept;
};

ValueHistogram value_histogram(const DataSource& ds, std::string_view column);
ValueHistogram value_histogram(const Column& column);

/// Two-column CSV "value,count" with a header row; NUL rendered as "NUL".
std::string histogram_to_csv(const ValueHistogram& h);

}  // namespace fieldalign
