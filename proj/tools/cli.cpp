#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpomp/config.hpp"
#include "gpomp/io.hpp"
#include "gpomp/measles.hpp"
#include "gpomp/oracles.hpp"

namespace gpomp::cli {

namespace {

namespace fs = std::filesystem;
using io::format_number;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::string data, theta, truth;
};

ExperimentConfig load(const Common& o) {
  ExperimentConfig c = o.config_path.empty() ? parse_config("{}") : load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output = *o.out;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError({"--threads: must be at least 1"});
    c.threads = *o.threads;
  }
  return c;
}

std::string out_path(const ExperimentConfig& c, const std::string& name) { return (fs::path(c.output) / name).string(); }

std::string data_path(const ExperimentConfig& c, const Common& o) {
  return o.data.empty() ? out_path(c, "cases.csv") : o.data;
}

std::vector<std::string> state_components(const ExperimentConfig& c, const Model& model) {
  if (c.model == ModelKind::measles) return {"S", "E", "I", "Z"};
  const std::size_t d = model.state_layout().dim(0);
  if (d == 1) return {"x"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i < d; ++i) names.push_back("x" + std::to_string(i + 1));
  return names;
}

// Runs task(i) for i in [0, n) on a pool of `threads` workers.  Each task
// owns its outputs and its random streams, so scheduling does not affect
// results.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& task) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string csv_cell(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string log_value(LogValue x) { return x.is_zero() ? "-inf" : format_number(x.value()); }

// --- simulate ---------------------------------------------------------------

void cmd_simulate(const Common& o) {
  const ExperimentConfig c = load(o);
  const Setup s = build_setup(c);
  const RngKey key(c.seed);
  const UnitParameterField truth = draw_truth(c, s, key.child(StreamTag::simulation, 0));
  const Simulation sim = simulate(*s.model, truth, s.t0, s.times, key.child(StreamTag::simulation, 1));
  const auto& labels = s.graph.labels();
  io::write_file_atomic(out_path(c, "cases.csv"), io::cases_csv(sim.observations, labels));
  io::write_file_atomic(out_path(c, "states.csv"),
                        io::states_csv(s.t0, s.times, sim.states, s.model->state_layout(), labels,
                                       state_components(c, *s.model)));
  io::write_file_atomic(out_path(c, "truth.json"), io::params_json(truth, labels));
  std::cout << "simulated " << labels.size() << " units x " << s.times.size() << " times into " << c.output << "\n";
}

// --- filter -----------------------------------------------------------------

void cmd_filter(const Common& o) {
  const ExperimentConfig c = load(o);
  const Setup s = build_setup(c);
  const auto& labels = s.graph.labels();
  const ObservationSeries data = io::read_cases(data_path(c, o), labels, s.t0);
  if (o.theta.empty()) throw std::invalid_argument("filter needs --theta");
  const UnitParameterField theta = io::read_params(o.theta, s.model->param_layout(), labels);
  const FilterSettings fs{c.filter_particles, c.scheme, c.threads};
  const RngKey key = RngKey(c.seed).child(StreamTag::evaluation);
  FilterOutput out;
  switch (c.filter) {
    case FilterKind::pf:
      out = pf_run(*s.model, theta, data, fs, key);
      break;
    case FilterKind::bpf:
      out = bpf_run(*s.model, s.partition, theta, data, fs, key);
      break;
    case FilterKind::enkf:
      out = enkf_run(*s.model, theta, data, fs, key);
      break;
  }
  const double cells = static_cast<double>(labels.size() * data.n_times());
  double mean_ess = 0.0;
  for (double e : out.ess) mean_ess += e;
  std::string summary = std::string(io::kSchemaLine) +
                        "\nfilter,particles,blocks,loglik,loglik_norm,degenerate_cells,mean_ess\n" + to_string(c.filter) +
                        "," + std::to_string(out.particles) + "," + std::to_string(out.n_blocks) + "," +
                        log_value(out.log_likelihood) + "," +
                        (out.log_likelihood.is_zero() ? "-inf" : format_number(out.log_likelihood.value() / cells)) +
                        "," + std::to_string(out.degenerate_cells) + "," +
                        (out.ess.empty() ? "NA" : format_number(mean_ess / static_cast<double>(out.ess.size()))) + "\n";
  std::string steps = std::string(io::kSchemaLine) + "\ntime,loglik";
  for (std::size_t k = 0; k < out.n_blocks; ++k) steps += ",ess_" + std::to_string(k + 1);
  steps += "\n";
  for (std::size_t n = 0; n < data.n_times(); ++n) {
    steps += format_number(data.time(n)) + "," + log_value(out.step_log_likelihood[n]);
    for (std::size_t k = 0; k < out.n_blocks; ++k) steps += "," + format_number(out.ess_at(n, k));
    steps += "\n";
  }
  io::write_file_atomic(out_path(c, "filter_summary.csv"), summary);
  io::write_file_atomic(out_path(c, "filter_steps.csv"), steps);
  std::cout << to_string(c.filter) << " log-likelihood " << log_value(out.log_likelihood) << "\n";
}

// --- metrics ----------------------------------------------------------------

std::string metrics_header() {
  std::string h = std::string(io::kSchemaLine) + "\nlabel,status,units,times";
  for (const char* m : {"lE", "lP", "lB"})
    for (const char* suffix : {"", "_se", "_norm", "_se_norm"}) h += std::string(",") + m + suffix;
  return h + "\n";
}

std::string metrics_row(const std::string& label, const MetricTriple& t, std::size_t units, std::size_t times) {
  const double cells = static_cast<double>(units * times);
  std::string row = csv_cell(label) + ",ok," + std::to_string(units) + "," + std::to_string(times);
  for (const MetricEstimate* m : {&t.enkf, &t.pf, &t.bpf}) {
    if (!m->available) {
      row += ",NA,NA,NA,NA";
      continue;
    }
    if (m->mean.is_zero()) {
      row += ",-inf,NA,-inf,NA";
      continue;
    }
    row += "," + format_number(m->mean.value()) + "," + format_number(m->se) + "," +
           format_number(m->mean.value() / cells) + "," + format_number(m->se / cells);
  }
  return row + "\n";
}

std::string failed_row(const std::string& label, std::size_t units, std::size_t times) {
  std::string row = csv_cell(label) + ",Failed," + std::to_string(units) + "," + std::to_string(times);
  for (int i = 0; i < 12; ++i) row += ",Failed";
  return row + "\n";
}

MetricTriple evaluate(const ExperimentConfig& c, const Setup& s, const UnitParameterField& theta,
                      const ObservationSeries& data) {
  const FilterSettings fs{c.eval_particles, c.scheme, c.threads};
  return evaluate_metrics(*s.model, s.partition, theta, data, fs, c.eval_replicates,
                          RngKey(c.seed).child(StreamTag::evaluation));
}

void cmd_evaluate(const Common& o) {
  const ExperimentConfig c = load(o);
  const Setup s = build_setup(c);
  const auto& labels = s.graph.labels();
  const ObservationSeries data = io::read_cases(data_path(c, o), labels, s.t0);
  if (o.theta.empty()) throw std::invalid_argument("evaluate needs --theta");
  const UnitParameterField theta = io::read_params(o.theta, s.model->param_layout(), labels);
  const MetricTriple t = evaluate(c, s, theta, data);
  const std::string label = fs::path(o.theta).stem().string();
  io::write_file_atomic(out_path(c, "metrics.csv"),
                        metrics_header() + metrics_row(label, t, labels.size(), data.n_times()));
  std::cout << "lE " << log_value(t.enkf.mean) << "  lP " << log_value(t.pf.mean) << "  lB " << log_value(t.bpf.mean)
            << "\n";
}

// --- learn ------------------------------------------------------------------

std::vector<std::size_t> learned_coords(const PerturbationKernel& kernel, const std::vector<double>& lower,
                                        const std::vector<double>& upper) {
  std::vector<std::size_t> coords;
  for (std::size_t i = 0; i < kernel.scales.size(); ++i)
    if (kernel.scales[i] > 0.0 || lower[i] < upper[i]) coords.push_back(i);
  return coords;
}

std::string trace_csv(const IterationTrace& trace, const ParamLayout& layout, const std::vector<std::size_t>& coords) {
  std::string out = std::string(io::kSchemaLine) + "\niteration,sigma,loglik,degenerate_cells";
  for (std::size_t i : coords) out += ",mean_" + layout.coord_name(i) + ",sd_" + layout.coord_name(i);
  out += "\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.iteration) + "," + format_number(r.sigma) + "," + log_value(r.log_likelihood) + "," +
           std::to_string(r.degenerate_cells);
    for (std::size_t i : coords) out += "," + format_number(r.mean[i]) + "," + format_number(r.sd[i]);
    out += "\n";
  }
  return out;
}

void cmd_learn(const Common& o) {
  const ExperimentConfig c = load(o);
  const Setup s = build_setup(c);
  const auto& labels = s.graph.labels();
  const ObservationSeries data = io::read_cases(data_path(c, o), labels, s.t0);
  const ParamLayout& layout = s.model->param_layout();
  std::optional<UnitParameterField> truth;
  if (!o.truth.empty()) truth = io::read_params(o.truth, layout, labels);

  const auto& algos = c.learning.algorithms;
  const std::size_t R = c.learning.replicates;
  const CoolingSchedule cooling{c.learning.sigma0, c.learning.cooling};
  const LearningSettings settings{c.learning.iterations, FilterSettings{c.learning.particles, c.scheme, 1}};
  const RngKey master(c.seed);

  // Task (r, a): every algorithm in replicate r starts from the same draw and
  // uses the same learning key.
  std::vector<LearnOutcome> outcomes(R * algos.size());
  parallel_for(outcomes.size(), c.threads, [&](std::size_t i) {
    const std::size_t r = i / algos.size(), a = i % algos.size();
    const RngKey kr = master.child(StreamTag::replicate, r);
    const ParameterSwarm initial =
        ParameterSwarm::uniform_boxes(s.base, s.lower, s.upper, c.learning.particles, kr.child(StreamTag::swarm));
    outcomes[i] = learn_once(algos[a], *s.model, s.partition, data, initial, s.kernel, cooling, settings,
                             kr.child(StreamTag::learning));
  });

  const auto coords = learned_coords(s.kernel, s.lower, s.upper);
  std::string reps = std::string(io::kSchemaLine) + "\nalgorithm,replicate,status,loglik";
  for (std::size_t i : coords) reps += "," + layout.coord_name(i);
  reps += ",message\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const std::size_t r = i / algos.size(), a = i % algos.size();
    const auto& out = outcomes[i];
    const std::string name = to_string(algos[a]);
    reps += name + "," + std::to_string(r + 1) + "," + (out.failed ? "Failed" : "ok") + ",";
    reps += out.failed ? "Failed" : log_value(out.own_metric);
    for (std::size_t k : coords) reps += "," + (out.failed ? std::string("Failed") : format_number(out.estimate[k]));
    reps += "," + csv_cell(out.failure) + "\n";
    if (!out.failed)
      io::write_file_atomic(out_path(c, "trace_" + name + "_r" + std::to_string(r + 1) + ".csv"),
                            trace_csv(out.trace, layout, coords));
  }
  io::write_file_atomic(out_path(c, "replicates.csv"), reps);

  std::string metrics = metrics_header();
  for (std::size_t a = 0; a < algos.size(); ++a) {
    const std::string name = to_string(algos[a]);
    std::vector<LearnOutcome> mine;
    for (std::size_t r = 0; r < R; ++r) mine.push_back(outcomes[r * algos.size() + a]);
    const auto best = best_replicate(mine);
    if (!best) {
      metrics += failed_row(name, labels.size(), data.n_times());
      std::cout << name << ": every replicate failed\n";
      continue;
    }
    const UnitParameterField theta(layout, mine[*best].estimate);
    io::write_file_atomic(out_path(c, "params_" + name + ".json"), io::params_json(theta, labels));
    const MetricTriple t = evaluate(c, s, theta, data);
    metrics += metrics_row(name, t, labels.size(), data.n_times());
    std::cout << name << ": best replicate " << *best + 1 << ", lB " << log_value(t.bpf.mean) << "\n";
  }
  if (truth) metrics += metrics_row("truth", evaluate(c, s, *truth, data), labels.size(), data.n_times());
  io::write_file_atomic(out_path(c, "metrics.csv"), metrics);
}

// --- bound ------------------------------------------------------------------

nlohmann::ordered_json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json bound_json(const BoundInputs& in, const BoundReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = "v1";
  j["inputs"] = {{"eps_x", in.eps_x},
                 {"eps_y", in.eps_y},
                 {"eps_theta", in.eps_theta},
                 {"delta", in.delta},
                 {"delta_blocks", in.delta_blocks},
                 {"max_block", in.max_block},
                 {"radius", in.radius},
                 {"particles", in.particles},
                 {"boundary_distance", in.boundary_distance},
                 {"subset_size", in.subset_size}};
  j["condition_satisfied"] = r.condition_satisfied;
  j["threshold"] = number_or_null(r.threshold);
  j["beta"] = number_or_null(r.beta);
  j["bias_term"] = number_or_null(r.bias_term);
  j["variance_term"] = number_or_null(r.variance_term);
  j["total_bound"] = r.total_bound ? number_or_null(*r.total_bound) : nullptr;
  return j;
}

void cmd_bound(const Common& o, const BoundInputs& in, const std::vector<std::size_t>& sweep) {
  in.validate();
  auto j = bound_json(in, bound_calculator(in));
  if (!sweep.empty()) {
    j["particle_sweep"] = nlohmann::ordered_json::array();
    for (std::size_t J : sweep) {
      BoundInputs k = in;
      k.particles = J;
      k.validate();
      const auto r = bound_calculator(k);
      j["particle_sweep"].push_back(
          {{"particles", J}, {"total_bound", r.total_bound ? number_or_null(*r.total_bound) : nullptr}});
    }
  }
  const std::string text = j.dump(2) + "\n";
  if (o.out) io::write_file_atomic((fs::path(*o.out) / "bound.json").string(), text);
  std::cout << text;
}

// --- compare ----------------------------------------------------------------

struct RunMetrics {
  std::string label;
  std::string units = "NA";
  std::map<std::string, std::map<std::string, std::string>> cells;  // row label -> column -> value
};

RunMetrics read_run(const std::string& label, const std::string& dir) {
  RunMetrics run;
  run.label = label;
  const auto t = io::read_csv((fs::path(dir) / "metrics.csv").string());
  const std::size_t cl = t.column("label"), cu = t.column("units");
  for (const auto& row : t.rows) {
    run.units = row[cu];
    for (std::size_t i = 0; i < t.header.size(); ++i) run.cells[row[cl]][t.header[i]] = row[i];
  }
  return run;
}

std::string fixed(const std::string& cell) {
  if (cell == "NA" || cell == "Failed" || cell == "-inf") return cell;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", io::parse_number(cell));
  return buf;
}

void cmd_compare(const Common& o, const std::vector<std::string>& run_flags) {
  ExperimentConfig c = load(o);
  for (const auto& f : run_flags) {
    const auto eq = f.find('=');
    if (eq == std::string::npos)
      c.compare_runs.emplace_back(f, f);
    else
      c.compare_runs.emplace_back(f.substr(0, eq), f.substr(eq + 1));
  }
  if (c.compare_runs.empty()) throw std::invalid_argument("compare needs runs (config compare.runs or --run)");
  std::vector<RunMetrics> runs;
  for (const auto& [label, dir] : c.compare_runs) runs.push_back(read_run(label, dir));

  std::vector<std::string> rows;
  for (const char* known : {"ibpf", "if2", "ienkf"})
    for (const auto& r : runs)
      if (r.cells.contains(known)) {
        rows.push_back(known);
        break;
      }
  for (const auto& r : runs)
    for (const auto& [name, _] : r.cells)
      if (name != "truth" && std::find(rows.begin(), rows.end(), name) == rows.end()) rows.push_back(name);
  rows.push_back("truth");

  std::vector<std::string> header{"run", "units"};
  for (const auto& a : rows)
    for (const char* m : {"lE", "lP", "lB"}) header.push_back(a + ":" + m);
  std::vector<std::vector<std::string>> table;
  for (const auto& r : runs) {
    std::vector<std::string> line{r.label, r.units};
    for (const auto& a : rows)
      for (const char* m : {"lE", "lP", "lB"}) {
        const auto row = r.cells.find(a);
        if (row == r.cells.end()) {
          line.push_back("NA");
          continue;
        }
        const auto cell = row->second.find(std::string(m) + "_norm");
        line.push_back(cell == row->second.end() || cell->second.empty() ? "NA" : cell->second);
      }
    table.push_back(std::move(line));
  }

  std::string csv = std::string(io::kSchemaLine) + "\n";
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv_cell(v[i]);
    return s + "\n";
  };
  csv += join(header);
  for (const auto& line : table) csv += join(line);

  std::vector<std::vector<std::string>> shown{header};
  for (const auto& line : table) {
    auto s = line;
    for (std::size_t i = 2; i < s.size(); ++i) s[i] = fixed(s[i]);
    shown.push_back(std::move(s));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : shown)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::string text;
  for (const auto& line : shown) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      const std::string pad(width[i] - line[i].size(), ' ');
      text += i < 2 ? line[i] + pad : pad + line[i];
      text += i + 1 < line.size() ? "  " : "\n";
    }
  }
  io::write_file_atomic(out_path(c, "summary.csv"), csv);
  io::write_file_atomic(out_path(c, "summary.txt"), text);
  std::cout << text;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Inference for graph-indexed partially observed Markov processes", "gpomp"};
  app.require_subcommand(1);
  Common o;
  BoundInputs bound;
  std::vector<std::size_t> sweep;
  std::vector<std::string> run_flags;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "experiment configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads");
  };
  auto* sim = app.add_subcommand("simulate", "simulate a dataset and its latent states");
  auto* fil = app.add_subcommand("filter", "run one filter at fixed parameters");
  auto* lrn = app.add_subcommand("learn", "learn parameters with each configured algorithm");
  auto* evl = app.add_subcommand("evaluate", "evaluate the three log-likelihood metrics at fixed parameters");
  auto* bnd = app.add_subcommand("bound", "error-bound calculator");
  auto* cmp = app.add_subcommand("compare", "tabulate metrics across learn runs");
  for (auto* sub : {sim, fil, lrn, evl, bnd, cmp}) common(sub);
  for (auto* sub : {fil, lrn, evl}) sub->add_option("--data", o.data, "cases CSV (default: <out>/cases.csv)");
  for (auto* sub : {fil, evl}) sub->add_option("--theta", o.theta, "parameter file (JSON)")->required();
  lrn->add_option("--truth", o.truth, "parameter file evaluated as the truth row");
  bnd->add_option("--eps-x", bound.eps_x)->required();
  bnd->add_option("--eps-y", bound.eps_y)->required();
  bnd->add_option("--eps-theta", bound.eps_theta)->required();
  bnd->add_option("--delta", bound.delta)->required();
  bnd->add_option("--delta-blocks", bound.delta_blocks)->required();
  bnd->add_option("--max-block", bound.max_block)->required();
  bnd->add_option("--radius", bound.radius)->required();
  bnd->add_option("--particles", bound.particles)->required();
  bnd->add_option("--boundary-distance", bound.boundary_distance)->required();
  bnd->add_option("--subset-size", bound.subset_size)->required();
  bnd->add_option("--sweep-particles", sweep, "extra particle counts to tabulate")->delimiter(',');
  cmp->add_option("--run", run_flags, "LABEL=DIR of a learn run (repeatable)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim) cmd_simulate(o);
    if (*fil) cmd_filter(o);
    if (*lrn) cmd_learn(o);
    if (*evl) cmd_evaluate(o);
    if (*bnd) cmd_bound(o, bound, sweep);
    if (*cmp) cmd_compare(o, run_flags);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const io::FormatError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}

}  // namespace gpomp::cli
