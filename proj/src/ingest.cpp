#include "fieldalign/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "fieldalign/error.hpp"
#include "fieldalign/text.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::ingest, kind, msg);
}

using Record = std::vector<std::string>;

// RFC-4180 reader. Quoted fields may contain delimiters, doubled quotes and
// line breaks; a quote inside an unquoted field is kept literally.
std::vector<Record> read_csv_records(std::string_view text) {
    std::vector<Record> records;
    Record record;
    std::string field;
    std::size_t i = 0;
    const std::size_t n = text.size();

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
    };

    while (i < n) {
        if (text[i] == '"') {
            const std::size_t row = records.size() + 1;
            ++i;
            while (true) {
                if (i >= n) throw ParseError(row, "unterminated quoted field");
                if (text[i] == '"') {
                    if (i + 1 < n && text[i + 1] == '"') {
                        field += '"';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field += text[i++];
            }
            if (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
                throw ParseError(row, "unexpected character after closing quote");
            }
        }
        // unquoted remainder of the field
        while (i < n && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
            field += text[i++];
        }
        if (i >= n) {
            end_record();
            break;
        }
        if (text[i] == ',') {
            record.push_back(std::move(field));
            field.clear();
            ++i;
            if (i >= n) end_record();  // trailing delimiter at EOF
            continue;
        }
        // line break: \n, \r\n or lone \r
        if (text[i] == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
        ++i;
        end_record();
    }
    return records;
}

std::vector<Record> read_tsv_records(std::string_view text) {
    std::vector<Record> records;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        Record rec;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            if (tab == std::string_view::npos) {
                rec.emplace_back(line.substr(start));
                break;
            }
            rec.emplace_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        records.push_back(std::move(rec));
        pos = eol + 1;
    }
    return records;
}

std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    return 1 + static_cast<std::size_t>(
                   std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

TableFormat parse_table_format(std::string_view s) {
    if (s == "csv") return TableFormat::csv;
    if (s == "tsv") return TableFormat::tsv;
    fail(ErrorKind::usage, "unknown table format '" + std::string(s) + "' (expected csv or tsv)");
}

NulPolicy parse_nul_policy(std::string_view s) {
    if (s == "empty_is_nul") return NulPolicy::empty_is_nul;
    if (s == "skip_empty") return NulPolicy::skip_empty;
    fail(ErrorKind::usage,
         "unknown NUL policy '" + std::string(s) + "' (expected empty_is_nul or skip_empty)");
}

std::string_view to_string(TableFormat f) noexcept {
    return f == TableFormat::csv ? "csv" : "tsv";
}

std::string_view to_string(NulPolicy p) noexcept {
    return p == NulPolicy::empty_is_nul ? "empty_is_nul" : "skip_empty";
}

DataSource::DataSource(std::string name, std::vector<Column> columns)
    : name_(std::move(name)), columns_(std::move(columns)) {
    if (columns_.empty()) fail(ErrorKind::data, "data source '" + name_ + "' has no columns");
    std::unordered_set<std::string_view> seen;
    for (const auto& c : columns_) {
        if (!seen.insert(c.name).second) {
            fail(ErrorKind::data, "duplicate column name '" + c.name + "'");
        }
        if (c.cells.empty()) {
            fail(ErrorKind::data, "column '" + c.name + "' has no cells");
        }
    }
}

const Column& DataSource::column(std::string_view name) const {
    return columns_[column_index(name)];
}

std::size_t DataSource::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (columns_[i].name == name) return i;
    }
    fail(ErrorKind::lookup, "unknown column '" + std::string(name) + "' in '" + name_ + "'");
}

std::vector<std::string> DataSource::column_names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

std::size_t DataSource::max_cells() const noexcept {
    std::size_t m = 0;
    for (const auto& c : columns_) m = std::max(m, c.size());
    return m;
}

std::size_t DataSource::total_cells() const noexcept {
    std::size_t t = 0;
    for (const auto& c : columns_) t += c.size();
    return t;
}

DataSource parse_table(std::string_view text, std::string name, TableFormat format,
                       NulPolicy nul_policy) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    if (const auto bad = text::find_invalid_utf8(text); bad != std::string_view::npos) {
        throw ParseError(line_of_offset(text, bad),
                         "invalid UTF-8 at byte offset " + std::to_string(bad));
    }
    auto records = format == TableFormat::csv ? read_csv_records(text) : read_tsv_records(text);
    if (records.empty()) fail(ErrorKind::data, "'" + name + "' is empty (no header row)");

    const auto& header = records.front();
    std::vector<Column> columns(header.size());
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < header.size(); ++i) {
        columns[i].name = is_blank(header[i]) ? "Field_" + std::to_string(i + 1) : header[i];
        if (!seen.insert(columns[i].name).second) {
            fail(ErrorKind::data, "duplicate header '" + columns[i].name + "' in '" + name + "'");
        }
    }

    for (std::size_t r = 1; r < records.size(); ++r) {
        auto& rec = records[r];
        if (rec.size() != header.size()) {
            throw ParseError(r + 1, "expected " + std::to_string(header.size()) +
                                        " fields, found " + std::to_string(rec.size()));
        }
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (rec[c].empty()) {
                if (nul_policy == NulPolicy::empty_is_nul) columns[c].cells.push_back(kNulCell);
            } else {
                columns[c].cells.push_back(std::move(rec[c]));
            }
        }
    }
    if (records.size() == 1) fail(ErrorKind::data, "'" + name + "' has a header but no data rows");
    for (const auto& c : columns) {
        if (c.cells.empty()) {
            fail(ErrorKind::data, "column '" + c.name + "' of '" + name +
                                      "' has no non-empty cells under skip_empty");
        }
    }
    return DataSource(std::move(name), std::move(columns));
}

DataSource load_table(const std::filesystem::path& path, TableFormat format,
                      NulPolicy nul_policy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_table(buf.str(), path.stem().string(), format, nul_policy);
}

DataSource sample_rows(const DataSource& ds, std::size_t start, std::size_t count) {
    if (count == 0) fail(ErrorKind::usage, "sample count must be positive");
    if (start >= ds.max_cells()) {
        fail(ErrorKind::data, "empty sample: start " + std::to_string(start) +
                                  " is beyond every column of '" + ds.name() + "'");
    }
    std::vector<Column> cols;
    cols.reserve(ds.num_columns());
    for (const auto& c : ds.columns()) {
        if (start >= c.size()) {
            fail(ErrorKind::data, "column '" + c.name + "' has only " + std::to_string(c.size()) +
                                      " cells; sample start " + std::to_string(start) +
                                      " leaves it empty");
        }
        const auto end = std::min(c.size(), start + count);
        cols.push_back({c.name, {c.cells.begin() + static_cast<std::ptrdiff_t>(start),
                                 c.cells.begin() + static_cast<std::ptrdiff_t>(end)}});
    }
    return DataSource(ds.name(), std::move(cols));
}

std::size_t ValueHistogram::total() const noexcept {
    std::size_t t = 0;
    for (const auto& e : entries) t += e.second;
    return t;
}

double ValueHistogram::fraction(std::string_view value) const noexcept {
    const auto t = total();
    if (t == 0) return 0.0;
    for (const auto& [v, c] : entries) {
        if (v == value) return static_cast<double>(c) / static_cast<double>(t);
    }
    return 0.0;
}

ValueHistogram value_histogram(const Column& column) {
    std::map<std::string, std::size_t> counts;
    for (const auto& cell : column.cells) ++counts[cell];
    ValueHistogram h{column.name, {counts.begin(), counts.end()}};
    std::stable_sort(h.entries.begin(), h.entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return h;
}

ValueHistogram value_histogram(const DataSource& ds, std::string_view column) {
    return value_histogram(ds.column(column));
}

namespace {

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

std::string histogram_to_csv(const ValueHistogram& h) {
    std::string out = "value,count\n";
    for (const auto& [v, c] : h.entries) {
        out += csv_field(display_cell(v));
        out += ',';
        out += std::to_string(c);
        out += '\n';
    }
    return out;
}

}  // namespace fieldalign
