#include "vidyn/io/csv.hpp"

#include <cstdio>
#include <sstream>

#include "vidyn/common/error.hpp"

namespace vidyn::io {

CsvWriter::CsvWriter(const std::filesystem::path& file,
                     const std::vector<std::string>& header)
    : out_(file), cols_(header.size()), file_(file) {
  if (!out_) throw IoError("cannot open " + file.string() + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i > 0) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != cols_)
    throw ShapeError("csv row width " + std::to_string(values.size()) +
                     " != header width " + std::to_string(cols_));
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out_ << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
    out_ << buf;
  }
  out_ << '\n';
}

void CsvWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("write failed for " + file_.string());
}

std::size_t CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw UsageError("csv column '" + name + "' not found");
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError(file.string() + ": empty csv");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(table.header.size());
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(file.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    if (row.size() != table.header.size())
      throw IoError(file.string() + ": ragged row");
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace vidyn::io
