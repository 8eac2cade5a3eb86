#include "cdet/eval/tables.hpp"

#include <cstdio>
#include <fstream>

#include "cdet/error.hpp"
#include "cdet/eval/metrics.hpp"

namespace cdet {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

ResultTable::Row& ResultTable::add_row(const std::string& name) {
  rows.push_back({name, {}});
  return rows.back();
}

std::optional<TableCell> ResultTable::average(const Row& row) const {
  std::vector<double> values;
  for (const auto& col : columns) {
    const auto it = row.cells.find(col);
    if (it == row.cells.end() || !it->second) return std::nullopt;
    values.push_back(it->second->mean);
  }
  if (values.empty()) return std::nullopt;
  return TableCell{mean_of(values), sample_std(values)};
}

std::string to_csv(const ResultTable& table, bool with_std) {
  std::string out = "config";
  for (const auto& col : table.columns) {
    out += "," + col;
    if (with_std) out += "," + col + "_std";
  }
  out += with_std ? ",Avg,Avg_std\n" : ",Avg\n";
  auto cell = [&](const std::optional<TableCell>& c) {
    if (!c) return std::string(with_std ? ",failed," : ",failed");
    std::string s = "," + num(100.0 * c->mean);
    if (with_std) s += "," + num(100.0 * c->std);
    return s;
  };
  for (const auto& row : table.rows) {
    out += row.name;
    for (const auto& col : table.columns) {
      const auto it = row.cells.find(col);
      out += cell(it == row.cells.end() ? std::nullopt : it->second);
    }
    out += cell(table.average(row)) + "\n";
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const ResultTable& table, bool with_std) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << to_csv(table, with_std);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

}  // namespace cdet
