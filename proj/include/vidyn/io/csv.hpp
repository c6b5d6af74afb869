#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace vidyn::io {

// Minimal numeric CSV: a header row, then rows of doubles printed with %.17g
// so values survive a write/read round trip.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& file,
            const std::vector<std::string>& header);
  void row(const std::vector<double>& values);
  void flush();

 private:
  std::ofstream out_;
  std::size_t cols_;
  std::filesystem::path file_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t col(const std::string& name) const;  // throws if absent
};

CsvTable read_csv(const std::filesystem::path& file);

}  // namespace vidyn::io
