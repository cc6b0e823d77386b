#pragma once

#include "sandreg/glm.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sandreg {

struct CsvLayout {
  std::string cluster = "cluster";
  std::string response = "y";
  /// Empty means every column other than cluster and response, in file order.
  std::vector<std::string> covariates;
};

/// Column names of a CSV header line.
std::vector<std::string> read_csv_header(const std::string& path);

/// Rows are grouped by cluster id; clusters appear in first-appearance order
/// and rows keep their file order within a cluster.
ClusterDataset ingest_csv(const std::string& path, const CsvLayout& layout);
ClusterDataset ingest_csv(std::istream& in, const CsvLayout& layout,
                          const std::string& source = "<stream>");

/// Writes columns cluster, y, x1..xp with 17 significant digits; cluster ids
/// are the zero-based cluster index.
void emit_dataset(std::ostream& out, const ClusterDataset& data);

}  // namespace sandreg
