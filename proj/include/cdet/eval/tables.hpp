#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cdet {

struct TableCell {
  double mean = 0;  // F1 in [0,1]
  double std = 0;
};

/// Rows are configurations, columns datasets plus an Avg column holding the
/// unweighted mean of the row (and the sample std across datasets).
struct ResultTable {
  std::vector<std::string> columns;
  struct Row {
    std::string name;
    std::map<std::string, std::optional<TableCell>> cells;  // nullopt: failed run
  };
  std::vector<Row> rows;

  Row& add_row(const std::string& name);
  /// nullopt when any cell of the row failed or is missing.
  std::optional<TableCell> average(const Row& row) const;
};

/// CSV with F1 in percent. `with_std` appends a `<column>_std` after each value.
std::string to_csv(const ResultTable& table, bool with_std = false);
void write_csv(const std::filesystem::path& path, const ResultTable& table, bool with_std = false);

}  // namespace cdet
