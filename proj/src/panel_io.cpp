#include "tvcov/panel_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "tvcov/errors.hpp"

namespace tvcov {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void require_unique(const std::vector<std::string>& labels, const std::string& what,
                    const std::string& source) {
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!seen.insert(l).second) {
      throw DataError(source + ": duplicate " + what + " label '" + l + "'");
    }
  }
}

std::unordered_map<std::string, int> index_of(const std::vector<std::string>& labels) {
  std::unordered_map<std::string, int> idx;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) idx.emplace(labels[i], i);
  return idx;
}

// Reorders table (rows = entities, cols = periods after layout normalisation)
// onto the reference labels. Reports every missing or extra label.
Eigen::MatrixXd align_to(const LabelledTable& table, const std::vector<std::string>& entity_ids,
                         const std::vector<std::string>& period_ids, const std::string& source) {
  const auto rows = index_of(table.row_labels);
  const auto cols = index_of(table.column_labels);
  std::vector<std::string> offending;
  for (const auto& e : entity_ids)
    if (!rows.count(e)) offending.push_back("missing entity '" + e + "'");
  for (const auto& p : period_ids)
    if (!cols.count(p)) offending.push_back("missing period '" + p + "'");
  const std::set<std::string> ents(entity_ids.begin(), entity_ids.end());
  const std::set<std::string> pers(period_ids.begin(), period_ids.end());
  for (const auto& e : table.row_labels)
    if (!ents.count(e)) offending.push_back("unexpected entity '" + e + "'");
  for (const auto& p : table.column_labels)
    if (!pers.count(p)) offending.push_back("unexpected period '" + p + "'");
  if (!offending.empty()) {
    std::string msg = source + ": label alignment failed:";
    for (const auto& o : offending) msg += " " + o + ";";
    throw DataError(msg);
  }
  Eigen::MatrixXd out(entity_ids.size(), period_ids.size());
  for (std::size_t i = 0; i < entity_ids.size(); ++i) {
    const int ri = rows.at(entity_ids[i]);
    for (std::size_t t = 0; t < period_ids.size(); ++t) {
      out(i, t) = table.values(ri, cols.at(period_ids[t]));
    }
  }
  return out;
}

LabelledTable oriented(LabelledTable table, Layout layout) {
  if (layout == Layout::entities_as_columns) {
    std::swap(table.row_labels, table.column_labels);
    table.values.transposeInPlace();
  }
  return table;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

LabelledTable read_labelled_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open file");
  const std::string source = path.string();

  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lines.empty() && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    lines.push_back(split_csv_line(line));
  }
  if (lines.empty()) throw DataError(source + ": empty file (header row required)");

  LabelledTable table;
  const auto& header = lines.front();
  if (header.size() < 2) throw DataError(source + ": header needs a label column and at least one data column");
  table.corner = trim(header.front());
  for (std::size_t j = 1; j < header.size(); ++j) table.column_labels.push_back(trim(header[j]));

  const std::size_t ncols = table.column_labels.size();
  const std::size_t nrows = lines.size() - 1;
  table.values.resize(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
  for (std::size_t i = 0; i < nrows; ++i) {
    const auto& fields = lines[i + 1];
    const std::size_t line_no = i + 2;
    if (fields.size() != ncols + 1) {
      throw DataError(source + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(ncols + 1));
    }
    table.row_labels.push_back(trim(fields[0]));
    for (std::size_t j = 0; j < ncols; ++j) {
      const std::string cell = trim(fields[j + 1]);
      const std::string where = source + ": row '" + table.row_labels.back() + "' (line " +
                                std::to_string(line_no) + "), column '" + table.column_labels[j] + "'";
      if (cell.empty()) throw DataError(where + ": missing value");
      double v = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) throw DataError(where + ": not a number '" + cell + "'");
      if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + cell + "'");
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  require_unique(table.row_labels, "row", source);
  require_unique(table.column_labels, "column", source);
  return table;
}

void write_labelled_csv(const std::filesystem::path& path, const LabelledTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write file");
  out << quote_if_needed(table.corner);
  for (const auto& c : table.column_labels) out << ',' << quote_if_needed(c);
  out << '\n';
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    out << quote_if_needed(table.row_labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) out << ',' << format_double(table.values(i, j));
    out << '\n';
  }
}

void PanelData::validate() const {
  if (N() < 2 || T() < 2) {
    throw DataError("panel must have N >= 2 and T >= 2, got N=" + std::to_string(N()) +
                    ", T=" + std::to_string(T()));
  }
  if (static_cast<int>(entity_ids.size()) != N() || static_cast<int>(period_ids.size()) != T()) {
    throw DataError("panel label counts do not match the value matrix");
  }
  if (!values.allFinite()) throw DataError("panel contains non-finite values");
  require_unique(entity_ids, "entity", "panel");
  require_unique(period_ids, "period", "panel");
}

PanelData PanelData::periods(int first, int last) const {
  if (first < 1 || last > T() || first > last) {
    throw ParameterError("period range [" + std::to_string(first) + ", " + std::to_string(last) +
                         "] outside 1.." + std::to_string(T()));
  }
  PanelData out;
  out.values = values.middleCols(first - 1, last - first + 1);
  out.entity_ids = entity_ids;
  out.period_ids.assign(period_ids.begin() + (first - 1), period_ids.begin() + last);
  return out;
}

Eigen::MatrixXd CharacteristicsPanel::slice(int t) const {
  if (t < 1 || t > T()) throw ParameterError("characteristic period " + std::to_string(t) + " out of range");
  Eigen::MatrixXd out(N(), d());
  for (int l = 0; l < d(); ++l) out.col(l) = values[static_cast<std::size_t>(l)].col(t - 1);
  return out;
}

void CharacteristicsPanel::validate() const {
  if (values.empty()) throw DataError("characteristics panel needs d >= 1");
  if (names.size() != values.size()) throw DataError("characteristic name count does not match d");
  for (int l = 0; l < d(); ++l) {
    const auto& v = values[static_cast<std::size_t>(l)];
    if (v.rows() != N() || v.cols() != T()) throw DataError("characteristic '" + names[l] + "' has mismatched shape");
    if (!v.allFinite()) throw DataError("characteristic '" + names[l] + "' contains non-finite values");
  }
}

void CharacteristicsPanel::validate_against(const PanelData& panel) const {
  validate();
  if (N() != panel.N() || T() != panel.T()) {
    throw DataError("characteristics are " + std::to_string(N()) + "x" + std::to_string(T()) +
                    " but the panel is " + std::to_string(panel.N()) + "x" + std::to_string(panel.T()));
  }
  if (entity_ids != panel.entity_ids || period_ids != panel.period_ids) {
    throw DataError("characteristics labels differ from the panel labels");
  }
}

CharacteristicsPanel CharacteristicsPanel::periods(int first, int last) const {
  if (first < 1 || last > T() || first > last) throw ParameterError("characteristic period range out of bounds");
  CharacteristicsPanel out;
  out.names = names;
  out.entity_ids = entity_ids;
  out.period_ids.assign(period_ids.begin() + (first - 1), period_ids.begin() + last);
  for (const auto& v : values) out.values.push_back(v.middleCols(first - 1, last - first + 1));
  return out;
}

PanelData load_panel(const std::filesystem::path& path, Layout layout) {
  auto table = oriented(read_labelled_csv(path), layout);
  PanelData panel;
  panel.values = std::move(table.values);
  panel.entity_ids = std::move(table.row_labels);
  panel.period_ids = std::move(table.column_labels);
  panel.validate();
  return panel;
}

void save_panel(const std::filesystem::path& path, const PanelData& panel, Layout layout) {
  LabelledTable table;
  table.corner = layout == Layout::entities_as_rows ? "entity" : "period";
  if (layout == Layout::entities_as_rows) {
    table.row_labels = panel.entity_ids;
    table.column_labels = panel.period_ids;
    table.values = panel.values;
  } else {
    table.row_labels = panel.period_ids;
    table.column_labels = panel.entity_ids;
    table.values = panel.values.transpose();
  }
  write_labelled_csv(path, table);
}

CharacteristicsPanel load_characteristics(const std::vector<std::filesystem::path>& paths,
                                          const PanelData& panel, Layout layout) {
  if (paths.empty()) throw ParameterError("at least one characteristic file is required");
  CharacteristicsPanel chars;
  chars.entity_ids = panel.entity_ids;
  chars.period_ids = panel.period_ids;
  for (const auto& p : paths) {
    const auto table = oriented(read_labelled_csv(p), layout);
    chars.values.push_back(align_to(table, panel.entity_ids, panel.period_ids, p.string()));
    chars.names.push_back(p.stem().string());
  }
  require_unique(chars.names, "characteristic", "characteristics");
  chars.validate_against(panel);
  return chars;
}

FactorSeries load_factors(const std::filesystem::path& path, const PanelData& panel, Layout layout) {
  // Factor files list factors as rows and periods as columns in the default layout.
  auto table = oriented(read_labelled_csv(path), layout);
  FactorSeries f;
  f.names = table.row_labels;
  f.values = align_to(table, table.row_labels, panel.period_ids, path.string());
  return f;
}

}  // namespace tvcov
