#pragma once
// CSV emission/parsing and checksums for result files. Numbers are written
// with enough digits to round-trip exactly; missing values (observables at
// hole sites) are written literally as "nan".

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tll::io {

class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& path);

  // '#'-prefixed metadata lines; allowed only before the header
  void comment(const std::string& text);
  void header(const std::vector<std::string>& columns);
  void row(const std::vector<double>& values);
  void row_mixed(const std::vector<std::string>& cells);

  static std::string format(double v);

private:
  std::ofstream out_;
  std::size_t n_columns_ = 0;
  bool header_written_ = false;
};

struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;  // -1 if absent
  double value(std::size_t row, int col) const;     // NaN for "nan"
};

CsvTable read_csv(const std::filesystem::path& path);

// FNV-1a, 64 bit. Stable across runs and platforms; used for the manifest
// checksums (integrity + reproducibility witness, not cryptography).
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(const std::string& s);
std::uint64_t checksum_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace tll::io
