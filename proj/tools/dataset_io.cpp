#include "dataset_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "nqce/errors.hpp"

namespace nqce::cli {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& comments) {
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "cluster_id,unit_id,A,Y";
  for (const auto& name : data.covariate_names) out << "," << name;
  out << "\n";
  for (const auto& c : data.clusters) {
    for (int j = 0; j < c.size(); ++j) {
      out << c.cluster_id << "," << (j + 1) << "," << int(c.treatments[j]) << ","
          << fmt_double(c.outcomes[j]);
      for (Eigen::Index k = 0; k < c.covariates.cols(); ++k)
        out << "," << fmt_double(c.covariates(j, k));
      out << "\n";
    }
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void bad(long line, const std::string& what) {
  fail(ErrorKind::Validation, "dataset line " + std::to_string(line) + ": " + what);
}

double number(const std::string& s, long line, const char* field) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
    bad(line, std::string("cannot parse ") + field + " value '" + s + "'");
  return v;
}

}  // namespace

ParsedDataset read_dataset_csv(std::istream& in) {
  std::string line;
  long lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    header = split(line);
    break;
  }
  if (header.size() < 4 || header[0] != "cluster_id" || header[1] != "unit_id" ||
      header[2] != "A" || header[3] != "Y")
    fail(ErrorKind::Validation, "dataset header must start with cluster_id,unit_id,A,Y");
  ParsedDataset out;
  out.covariate_names.assign(header.begin() + 4, header.end());
  const auto d = out.covariate_names.size();

  struct Rows {
    std::vector<std::vector<double>> x;
  };
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Rows> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      bad(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    auto [it, fresh] = index.try_emplace(cells[0], out.clusters.size());
    if (fresh) {
      ClusterRecord c;
      c.cluster_id = cells[0];
      out.clusters.push_back(std::move(c));
      rows.emplace_back();
    }
    auto& c = out.clusters[it->second];
    const double a = number(cells[2], lineno, "A");
    if (a != 0.0 && a != 1.0) bad(lineno, "treatment must be 0 or 1");
    c.treatments.push_back(static_cast<std::uint8_t>(a));
    c.outcomes.push_back(number(cells[3], lineno, "Y"));
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) x[k] = number(cells[4 + k], lineno, "covariate");
    rows[it->second].x.push_back(std::move(x));
  }
  for (std::size_t i = 0; i < out.clusters.size(); ++i) {
    auto& c = out.clusters[i];
    c.covariates.resize(Eigen::Index(rows[i].x.size()), Eigen::Index(d));
    for (std::size_t j = 0; j < rows[i].x.size(); ++j)
      for (std::size_t k = 0; k < d; ++k) c.covariates(Eigen::Index(j), Eigen::Index(k)) = rows[i].x[j][k];
  }
  return out;
}

void write_dataset_file(const std::string& path, const Dataset& data,
                        const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path + "' for writing");
  write_dataset_csv(out, data, comments);
  if (!out) fail(ErrorKind::Io, "write to '" + path + "' failed");
}

ParsedDataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return read_dataset_csv(in);
}

}  // namespace nqce::cli
