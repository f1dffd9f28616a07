#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "nqce/core.hpp"

namespace nqce::cli {

// Lines starting with '#' before the header carry provenance and are skipped
// by the reader.
void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& comments);

/// Long format: cluster_id, unit_id, A, Y, X1..Xd. Clusters are grouped by
/// cluster_id in order of first appearance; units keep file order. Returns
/// the raw records (validation is the caller's job). Parse problems are
/// Validation errors with the line number.
struct ParsedDataset {
  std::vector<ClusterRecord> clusters;
  std::vector<std::string> covariate_names;
};
ParsedDataset read_dataset_csv(std::istream& in);

void write_dataset_file(const std::string& path, const Dataset& data,
                        const std::vector<std::string>& comments);
ParsedDataset read_dataset_file(const std::string& path);

// %.17g
std::string fmt_double(double x);

}  // namespace nqce::cli
