#pragma once

#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace etax::csv {

// Split one CSV line into fields. Handles RFC-4180 quoting (embedded commas
// and doubled quotes); embedded newlines are not supported. A trailing '\r'
// is stripped.
void split_line(std::string_view line, std::vector<std::string>& fields);

std::string join_fields(const std::vector<std::string>& fields);

// Streaming reader over a comma-separated file with a mandatory header row.
class Reader {
public:
    explicit Reader(const std::string& path);

    const std::vector<std::string>& header() const { return header_; }
    // Column index by name, -1 when absent.
    int column(std::string_view name) const;

    // Reads the next data row into `fields`; returns false at end of file.
    // `row_number` is 1-based over data rows (header excluded).
    bool next(std::vector<std::string>& fields);
    long long row_number() const { return row_number_; }

private:
    std::ifstream in_;
    std::vector<std::string> header_;
    long long row_number_ = 0;
};

class Writer {
public:
    explicit Writer(const std::string& path);
    void write_row(const std::vector<std::string>& fields);
    void close();

private:
    std::ofstream out_;
};

}  // namespace etax::csv
