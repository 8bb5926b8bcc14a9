#include "gpomp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace gpomp::io {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t label_index(const std::vector<std::string>& labels, const std::string& label) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw FormatError("unknown unit label '" + label + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw FormatError("missing CSV column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first && line.rfind("#schema=", 0) == 0) {
      if (line != kSchemaLine) throw FormatError("'" + path + "' has unsupported " + line.substr(1));
      first = false;
      continue;
    }
    first = false;
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size())
      throw FormatError("'" + path + "': row has " + std::to_string(row.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw FormatError("'" + path + "' has no header");
  return t;
}

std::string format_number(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_number(const std::string& s) {
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw FormatError("not a number: '" + s + "'");
  return x;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out << content;
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string cases_csv(const ObservationSeries& data, const std::vector<std::string>& labels) {
  for (std::size_t v = 0; v < data.n_units(); ++v)
    if (data.layout().dim(v) != 1) throw std::invalid_argument("cases CSV needs scalar observations");
  std::string out = std::string(kSchemaLine) + "\ntime,city,cases\n";
  for (std::size_t n = 0; n < data.n_times(); ++n)
    for (std::size_t v = 0; v < data.n_units(); ++v)
      out += format_number(data.time(n)) + "," + labels[v] + "," + format_number(data.unit(n, v)[0]) + "\n";
  return out;
}

ObservationSeries read_cases(const std::string& path, const std::vector<std::string>& labels, double t0) {
  const CsvTable t = read_csv(path);
  const std::size_t ct = t.column("time"), cc = t.column("city"), cy = t.column("cases");
  std::map<double, std::map<std::size_t, double>> grid;
  for (const auto& row : t.rows) {
    auto& cell = grid[parse_number(row[ct])];
    const std::size_t v = label_index(labels, row[cc]);
    if (!cell.emplace(v, parse_number(row[cy])).second)
      throw FormatError("duplicate observation for city '" + row[cc] + "' at time " + row[ct]);
  }
  std::vector<double> times, values;
  for (const auto& [time, cells] : grid) {
    if (cells.size() != labels.size())
      throw FormatError("observations at time " + format_number(time) + " do not cover every unit");
    times.push_back(time);
    for (const auto& [v, y] : cells) values.push_back(y);
  }
  if (times.empty()) throw FormatError("'" + path + "' has no observations");
  if (!(times.front() > t0)) throw FormatError("observation times must come after the start time");
  return ObservationSeries(t0, std::move(times), UnitLayout::uniform(labels.size(), 1), std::move(values));
}

std::string states_csv(double t0, const std::vector<double>& times, const std::vector<double>& states,
                       const UnitLayout& layout, const std::vector<std::string>& labels,
                       const std::vector<std::string>& components) {
  std::string out = std::string(kSchemaLine) + "\ntime,city";
  for (const auto& c : components) out += "," + c;
  out += "\n";
  for (std::size_t n = 0; n <= times.size(); ++n) {
    const double t = n == 0 ? t0 : times[n - 1];
    for (std::size_t v = 0; v < layout.n_units(); ++v) {
      out += format_number(t) + "," + labels[v];
      for (std::size_t i = 0; i < layout.dim(v); ++i)
        out += "," + format_number(states[n * layout.total() + layout.offset(v) + i]);
      out += "\n";
    }
  }
  return out;
}

std::string params_json(const UnitParameterField& theta, const std::vector<std::string>& labels) {
  const ParamLayout& l = theta.layout;
  nlohmann::ordered_json j;
  j["schema"] = "v1";
  j["units"] = labels;
  j["unit"] = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < l.unit_size(); ++k) {
    std::vector<double> col;
    for (std::size_t v = 0; v < l.n_units(); ++v) col.push_back(theta.unit(v, k));
    j["unit"][l.unit_specs()[k].name] = col;
  }
  j["shared"] = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < l.shared_size(); ++k) j["shared"][l.shared_specs()[k].name] = theta.shared(k);
  return j.dump(2) + "\n";
}

UnitParameterField read_params(const std::string& path, const ParamLayout& layout,
                               const std::vector<std::string>& labels) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' is not valid JSON: " + e.what());
  }
  UnitParameterField theta(layout);
  std::vector<std::string> problems;
  try {
    if (j.value("schema", "") != "v1") problems.push_back("schema must be \"v1\"");
    if (j.at("units").get<std::vector<std::string>>() != labels) problems.push_back("unit labels do not match the model");
    std::set<std::string> seen;
    for (const auto& [name, col] : j.at("unit").items()) {
      const auto k = layout.find_unit(name);
      if (!k) {
        problems.push_back("unknown unit parameter '" + name + "'");
        continue;
      }
      seen.insert(name);
      const auto values = col.get<std::vector<double>>();
      if (values.size() != layout.n_units()) {
        problems.push_back("unit parameter '" + name + "' needs one value per unit");
        continue;
      }
      for (std::size_t v = 0; v < values.size(); ++v) theta.unit(v, *k) = values[v];
    }
    for (const auto& [name, value] : j.at("shared").items()) {
      const auto k = layout.find_shared(name);
      if (!k) {
        problems.push_back("unknown shared parameter '" + name + "'");
        continue;
      }
      seen.insert(name);
      theta.shared(*k) = value.get<double>();
    }
    for (const auto& s : layout.unit_specs())
      if (!seen.contains(s.name)) problems.push_back("missing unit parameter '" + s.name + "'");
    for (const auto& s : layout.shared_specs())
      if (!seen.contains(s.name)) problems.push_back("missing shared parameter '" + s.name + "'");
  } catch (const nlohmann::json::exception& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = "parameter file '" + path + "' does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw FormatError(msg);
  }
  return theta;
}

measles::CityCovariates read_covariates(const std::string& covariates_path, const std::string& distance_path) {
  const CsvTable t = read_csv(covariates_path);
  const std::size_t cc = t.column("city"), ct = t.column("time"), cp = t.column("population"),
                    cb = t.column("births");
  measles::CityCovariates cov;
  std::vector<std::vector<double>> times, pops, births;
  for (const auto& row : t.rows) {
    auto it = std::find(cov.names.begin(), cov.names.end(), row[cc]);
    std::size_t v = static_cast<std::size_t>(it - cov.names.begin());
    if (it == cov.names.end()) {
      cov.names.push_back(row[cc]);
      times.emplace_back();
      pops.emplace_back();
      births.emplace_back();
    }
    times[v].push_back(parse_number(row[ct]));
    pops[v].push_back(parse_number(row[cp]));
    births[v].push_back(parse_number(row[cb]));
  }
  try {
    for (std::size_t v = 0; v < cov.names.size(); ++v) {
      cov.population.emplace_back(times[v], pops[v]);
      cov.births.emplace_back(times[v], births[v]);
    }
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("covariates: ") + e.what());
  }
  const std::size_t n = cov.names.size();
  cov.distance.assign(n * n, -1.0);
  for (std::size_t v = 0; v < n; ++v) cov.distance[v * n + v] = 0.0;
  const CsvTable d = read_csv(distance_path);
  const std::size_t ca = d.column("city_a"), cb2 = d.column("city_b"), cd = d.column("distance");
  for (const auto& row : d.rows) {
    const std::size_t a = label_index(cov.names, row[ca]), b = label_index(cov.names, row[cb2]);
    const double x = parse_number(row[cd]);
    cov.distance[a * n + b] = x;
    cov.distance[b * n + a] = x;
  }
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (cov.distance[a * n + b] < 0.0)
        throw FormatError("distances: no entry for " + cov.names[a] + "," + cov.names[b]);
  try {
    cov.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("covariates: ") + e.what());
  }
  return cov;
}

}  // namespace gpomp::io
