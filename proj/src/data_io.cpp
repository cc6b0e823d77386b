#include "sandreg/data_io.hpp"

#include "sandreg/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace sandreg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  out.push_back(trim(field));
  return out;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::string& source) {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  throw DataError(source + ": no column named '" + name + "'");
}

double parse_value(const std::string& text, std::size_t row, const std::string& column,
                   const std::string& source) {
  const std::string where =
      source + ": row " + std::to_string(row) + ", column '" + column + "'";
  if (text.empty() || text == "NA" || text == "NaN" || text == "nan")
    throw DataError(where + ": missing value");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE)
    throw DataError(where + ": '" + text + "' is not a number");
  if (!std::isfinite(v)) throw DataError(where + ": value is not finite");
  return v;
}

}  // namespace

std::vector<std::string> read_csv_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing header row");
  return split_line(line);
}

ClusterDataset ingest_csv(const std::string& path, const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return ingest_csv(in, layout, path);
}

ClusterDataset ingest_csv(std::istream& in, const CsvLayout& layout, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  const auto header = split_line(line);
  const std::size_t c_col = column_index(header, layout.cluster, source);
  const std::size_t y_col = column_index(header, layout.response, source);
  std::vector<std::string> cov_names = layout.covariates;
  if (cov_names.empty())
    for (std::size_t k = 0; k < header.size(); ++k)
      if (k != c_col && k != y_col) cov_names.push_back(header[k]);
  if (cov_names.empty()) throw DataError(source + ": no covariate columns");
  std::vector<std::size_t> x_cols;
  for (const auto& name : cov_names) x_cols.push_back(column_index(header, name, source));

  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> ys;
  std::vector<std::vector<std::vector<double>>> xs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size())
      throw DataError(source + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    const std::string& id = fields[c_col];
    if (id.empty()) throw DataError(source + ": row " + std::to_string(row) + ": missing cluster id");
    auto [it, inserted] = index.try_emplace(id, ys.size());
    if (inserted) {
      ys.emplace_back();
      xs.emplace_back();
    }
    ys[it->second].push_back(parse_value(fields[y_col], row, header[y_col], source));
    std::vector<double> x;
    for (std::size_t k = 0; k < x_cols.size(); ++k)
      x.push_back(parse_value(fields[x_cols[k]], row, cov_names[k], source));
    xs[it->second].push_back(std::move(x));
  }
  if (ys.empty()) throw DataError(source + ": no data rows");

  std::vector<ClusterData> clusters;
  clusters.reserve(ys.size());
  const auto p = static_cast<Eigen::Index>(x_cols.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto n = static_cast<Eigen::Index>(ys[i].size());
    VectorXd y(n);
    MatrixXd x(n, p);
    for (Eigen::Index j = 0; j < n; ++j) {
      y(j) = ys[i][static_cast<std::size_t>(j)];
      for (Eigen::Index k = 0; k < p; ++k)
        x(j, k) = xs[i][static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    }
    clusters.emplace_back(std::move(y), std::move(x));
  }
  return ClusterDataset(std::move(clusters));
}

void emit_dataset(std::ostream& out, const ClusterDataset& data) {
  out << "cluster,y";
  for (std::size_t k = 0; k < data.p(); ++k) out << ",x" << (k + 1);
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < data.num_clusters(); ++i) {
    const auto& c = data[i];
    for (Eigen::Index j = 0; j < c.y.size(); ++j) {
      out << i << ',' << c.y(j);
      for (Eigen::Index k = 0; k < c.x.cols(); ++k) out << ',' << c.x(j, k);
      out << '\n';
    }
  }
}

}  // namespace sandreg
