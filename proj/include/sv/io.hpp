#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace sv {

// dense matrix in MatrixMarket coordinate format, writing only nonzeros
void write_matrix_market(const std::string& path, const Eigen::MatrixXd& mat,
                         const std::string& comment = "");

// CSV with '#' comment header lines (key=value provenance) then one header row
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);
  void add_comment(const std::string& line);
  void add_row(const std::vector<std::string>& cells);
  std::string str() const;
  void save(const std::string& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> comments_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

// "key = value" per line, '#' comments; later keys override earlier ones
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

}  // namespace sv
