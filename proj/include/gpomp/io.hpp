#pragma once

// File formats of the command-line driver.  CSV files open with the comment
// line "#schema=v1"; parameter files are JSON with per-unit arrays and shared
// scalars.  Numbers are written with 17 significant digits so that a round
// trip is exact.

#include <string>
#include <vector>

#include "gpomp/measles.hpp"
#include "gpomp/model.hpp"

namespace gpomp::io {

inline constexpr const char* kSchemaLine = "#schema=v1";

/// Malformed input files; mapped to the configuration exit status.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws FormatError when missing.
  std::size_t column(const std::string& name) const;
};

/// Reads a comma-separated file.  A leading "#schema=..." line must name v1;
/// other lines starting with '#' are skipped.
CsvTable read_csv(const std::string& path);

std::string format_number(double x);
double parse_number(const std::string& s);

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// time,city,cases with one row per (time, unit); single-component
/// observations only.
std::string cases_csv(const ObservationSeries& data, const std::vector<std::string>& labels);
ObservationSeries read_cases(const std::string& path, const std::vector<std::string>& labels, double t0);

/// time,city,<component names...>; row 0 of `states` is at t0.
std::string states_csv(double t0, const std::vector<double>& times, const std::vector<double>& states,
                       const UnitLayout& layout, const std::vector<std::string>& labels,
                       const std::vector<std::string>& components);

std::string params_json(const UnitParameterField& theta, const std::vector<std::string>& labels);
/// Throws FormatError unless unit labels and parameter names match exactly.
UnitParameterField read_params(const std::string& path, const ParamLayout& layout,
                               const std::vector<std::string>& labels);

/// Covariates from "city,time,population,births" and
/// "city_a,city_b,distance" tables.  City order is first appearance.
measles::CityCovariates read_covariates(const std::string& covariates_path, const std::string& distance_path);

}  // namespace gpomp::io
