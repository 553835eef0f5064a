#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace tvcov {

enum class Layout { entities_as_rows, entities_as_columns };

//! N x T observation matrix with entity (row) and period (column) labels.
struct PanelData {
  Eigen::MatrixXd values;
  std::vector<std::string> entity_ids;
  std::vector<std::string> period_ids;

  int N() const { return static_cast<int>(values.rows()); }
  int T() const { return static_cast<int>(values.cols()); }

  //! Throws DataError unless the panel is finite, at least 2x2 and uniquely labelled.
  void validate() const;

  //! Columns first..last (1-based, inclusive).
  PanelData periods(int first, int last) const;
};

//! d characteristics, each an N x T matrix sharing the paired panel's labels.
struct CharacteristicsPanel {
  std::vector<Eigen::MatrixXd> values;
  std::vector<std::string> names;
  std::vector<std::string> entity_ids;
  std::vector<std::string> period_ids;

  int d() const { return static_cast<int>(values.size()); }
  int N() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
  int T() const { return values.empty() ? 0 : static_cast<int>(values.front().cols()); }

  //! N x d cross-section at period t (1-based).
  Eigen::MatrixXd slice(int t) const;

  void validate() const;
  //! Throws DataError unless dimensions and labels match the panel exactly.
  void validate_against(const PanelData& panel) const;

  CharacteristicsPanel periods(int first, int last) const;
};

//! Parsed CSV: header row, one label column, numeric body.
struct LabelledTable {
  std::string corner;
  std::vector<std::string> column_labels;
  std::vector<std::string> row_labels;
  Eigen::MatrixXd values;
};

LabelledTable read_labelled_csv(const std::filesystem::path& path);
void write_labelled_csv(const std::filesystem::path& path, const LabelledTable& table);

PanelData load_panel(const std::filesystem::path& path, Layout layout = Layout::entities_as_rows);

//! Writes with 17 significant digits so that load(save(p)) == p bit for bit.
void save_panel(const std::filesystem::path& path, const PanelData& panel,
                Layout layout = Layout::entities_as_rows);

//! Each file holds one characteristic as an N x T table aligned to the panel by label.
//! The characteristic name is the file stem.
CharacteristicsPanel load_characteristics(const std::vector<std::filesystem::path>& paths,
                                          const PanelData& panel,
                                          Layout layout = Layout::entities_as_rows);

//! Observed factor series: K x T, columns aligned with the panel's periods by label.
struct FactorSeries {
  Eigen::MatrixXd values;
  std::vector<std::string> names;
};

FactorSeries load_factors(const std::filesystem::path& path, const PanelData& panel,
                          Layout layout = Layout::entities_as_rows);

//! Formats with %.17g.
std::string format_double(double x);

}  // namespace tvcov
