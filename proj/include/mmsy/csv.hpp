// Minimal CSV reading/writing. All pipeline artifacts are plain comma-separated
// text with a single header row; numbers are written with shortest round-trip
// formatting so identical runs produce byte-identical files.
#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmsy/errors.hpp"

namespace mmsy::csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct Row {
  int line = 0;  // 1-based line number in the file
  std::vector<std::string> fields;
};

class Table {
public:
  std::string path;
  std::vector<std::string> header;
  std::vector<Row> rows;

  int column(std::string_view name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ParseError(path + ": missing column '" + std::string(name) + "'");
  }

  void require_columns(const std::vector<std::string>& names) const {
    for (const auto& n : names) column(n);
  }

  const std::string& field(const Row& row, int col) const {
    if (col < 0 || static_cast<size_t>(col) >= row.fields.size())
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": row has too few fields");
    return row.fields[static_cast<size_t>(col)];
  }

  double number(const Row& row, int col) const {
    const std::string& s = field(row, col);
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": expected a number, got '" + s + "'");
    }
  }

  long integer(const Row& row, int col) const {
    const std::string& s = field(row, col);
    try {
      size_t pos = 0;
      long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(row.line) +
                       ": expected an integer, got '" + s + "'");
    }
  }
};

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  Table t;
  t.path = path;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    if (t.header.empty()) {
      t.header = split_line(line);
    } else {
      Row r;
      r.line = lineno;
      r.fields = split_line(line);
      if (r.fields.size() != t.header.size())
        throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(t.header.size()) + " fields, got " +
                         std::to_string(r.fields.size()));
      t.rows.push_back(std::move(r));
    }
  }
  if (t.header.empty()) throw ParseError(path + ": no records");
  return t;
}

// Shortest representation that round-trips through a double.
inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Writer {
public:
  explicit Writer(const std::string& path) : path_(path), out_(path) {
    if (!out_) throw Error("cannot write " + path);
  }

  void header(const std::vector<std::string>& names) { raw_row(names); }

  void raw_row(const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

  // Convenience: mixed text/number rows. The row is flushed when the builder
  // goes out of scope; builders are move-only so a row is written exactly once.
  class RowBuilder {
  public:
    explicit RowBuilder(Writer& w) : w_(&w) {}
    RowBuilder(const RowBuilder&) = delete;
    RowBuilder& operator=(const RowBuilder&) = delete;
    RowBuilder(RowBuilder&& other) noexcept
        : w_(other.w_), fields_(std::move(other.fields_)) {
      other.w_ = nullptr;
    }
    RowBuilder& text(std::string_view s) {
      fields_.emplace_back(s);
      return *this;
    }
    RowBuilder& num(double v) {
      fields_.push_back(format_number(v));
      return *this;
    }
    RowBuilder& integer(long v) {
      fields_.push_back(std::to_string(v));
      return *this;
    }
    ~RowBuilder() {
      if (w_) w_->raw_row(fields_);
    }

  private:
    Writer* w_;
    std::vector<std::string> fields_;
  };

  RowBuilder row() { return RowBuilder(*this); }

  void close() { out_.close(); }
  const std::string& path() const { return path_; }

private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace mmsy::csv
