#include "etax/csv.hpp"

#include "etax/common.hpp"

namespace etax::csv {

void split_line(std::string_view line, std::vector<std::string>& fields) {
    fields.clear();
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(std::move(cur));
}

std::string join_fields(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out += '"';
            for (char c : f) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        } else {
            out += f;
        }
    }
    return out;
}

Reader::Reader(const std::string& path) : in_(path) {
    if (!in_) throw ArtifactError("cannot open CSV file: " + path);
    std::string line;
    if (!std::getline(in_, line)) throw Error("CSV file is empty: " + path);
    split_line(line, header_);
}

int Reader::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return static_cast<int>(i);
    return -1;
}

bool Reader::next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
        ++row_number_;
        if (line.empty() || line == "\r") continue;
        split_line(line, fields);
        return true;
    }
    return false;
}

Writer::Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open file for writing: " + path);
}

void Writer::write_row(const std::vector<std::string>& fields) {
    out_ << join_fields(fields) << '\n';
}

void Writer::close() {
    out_.close();
    if (!out_) throw Error("failed to flush CSV output");
}

}  // namespace etax::csv
