#include "gpomp/config.hpp"

#include <set>
#include <type_traits>

#include <json.hpp>

#include "gpomp/io.hpp"
#include "gpomp/measles.hpp"
#include "gpomp/oracles.hpp"

namespace gpomp {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

// Collects problems while reading; every accessor leaves the default in place
// when the key is absent or malformed.
class Reader {
 public:
  std::vector<std::string> problems;

  void object(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      problems.push_back(where + ": expected an object");
      return;
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
      if (!ok.contains(key)) problems.push_back(where + ": unknown key '" + key + "'");
  }

  template <typename T>
  void get(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) return;
    if constexpr (std::is_unsigned_v<T>) {
      // the library would wrap negatives and truncate fractions
      if (!j.at(key).is_number_unsigned()) {
        problems.push_back(where + "." + key + ": expected a nonnegative integer");
        return;
      }
    }
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      problems.push_back(where + "." + key + ": wrong type");
    }
  }

  void require(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
};

const json& sub(const json& j, const char* key) {
  static const json empty = json::object();
  return j.is_object() && j.contains(key) ? j.at(key) : empty;
}

ModelKind parse_model(const std::string& s, Reader& r) {
  if (s == "measles") return ModelKind::measles;
  if (s == "linear-gaussian") return ModelKind::linear_gaussian;
  if (s == "discrete-hmm") return ModelKind::discrete_hmm;
  r.problems.push_back("model: unknown model '" + s + "' (measles | linear-gaussian | discrete-hmm)");
  return ModelKind::measles;
}

FilterKind parse_filter(const std::string& s, Reader& r) {
  if (s == "pf") return FilterKind::pf;
  if (s == "bpf") return FilterKind::bpf;
  if (s == "enkf") return FilterKind::enkf;
  r.problems.push_back("filter.algorithm: unknown filter '" + s + "' (pf | bpf | enkf)");
  return FilterKind::bpf;
}

std::size_t unit_count(const ExperimentConfig& c) {
  switch (c.model) {
    case ModelKind::measles:
      return c.measles.cities;
    case ModelKind::linear_gaussian:
      return c.linear_gaussian.units;
    case ModelKind::discrete_hmm:
      return c.discrete_hmm.units;
  }
  return 0;
}

ParamLayout layout_for(const ExperimentConfig& c, std::size_t n) {
  switch (c.model) {
    case ModelKind::measles:
      return measles::parameter_layout(n);
    case ModelKind::linear_gaussian:
      return ParamLayout(n, {}, {ParamSpec{"offset", Transform::identity, false}});
    case ModelKind::discrete_hmm:
      return ParamLayout(n, {}, {});
  }
  return {};
}

bool known_parameter(const ParamLayout& l, const std::string& name) {
  return l.find_unit(name).has_value() || l.find_shared(name).has_value();
}

void cross_checks(const ExperimentConfig& c, Reader& r) {
  const std::size_t n = unit_count(c);
  r.require(n >= 1, "the model needs at least one unit");
  if (c.graph.type == "explicit")
    r.require(c.graph.labels.size() == n, "graph.labels: expected " + std::to_string(n) + " labels");
  if (n == 0) return;
  if (!c.partition.blocks.empty()) {
    try {
      BlockPartition(c.partition.blocks, n);
    } catch (const std::invalid_argument& e) {
      r.problems.push_back(std::string("partition.blocks: ") + e.what());
    }
  }
  const ParamLayout layout = layout_for(c, n);
  for (const auto& [name, _] : c.learning.perturbation)
    r.require(known_parameter(layout, name), "learning.perturbation: unknown parameter '" + name + "'");
  for (const auto& [name, box] : c.learning.search_boxes) {
    r.require(known_parameter(layout, name), "learning.search_boxes: unknown parameter '" + name + "'");
    r.require(box.first < box.second, "learning.search_boxes." + name + ": lower must be below upper");
  }
  if (c.model == ModelKind::measles)
    for (const auto& [name, _] : c.measles.fixed)
      r.require(known_parameter(layout, name), "measles.fixed: unknown parameter '" + name + "'");

  const bool has_emeasure = c.model != ModelKind::discrete_hmm;
  if (!has_emeasure) {
    r.require(c.filter != FilterKind::enkf, "filter.algorithm: enkf needs a model with emeasure");
    for (Algorithm a : c.learning.algorithms)
      r.require(a != Algorithm::ienkf, "learning.algorithms: ienkf needs a model with emeasure");
  }
  const std::size_t blocks = c.partition.blocks.empty()
                                 ? (n + c.partition.block_size - 1) / std::max<std::size_t>(c.partition.block_size, 1)
                                 : c.partition.blocks.size();
  if (blocks > 1 && std::find(c.learning.algorithms.begin(), c.learning.algorithms.end(), Algorithm::ibpf) !=
                        c.learning.algorithms.end())
    for (const auto& [name, scale] : c.learning.perturbation)
      r.require(!(layout.find_shared(name) && scale > 0.0),
                "learning.perturbation: shared parameter '" + name + "' cannot be learned by ibpf with several blocks");
}

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : std::runtime_error(join_problems(problems)), problems_(problems) {}

const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::measles:
      return "measles";
    case ModelKind::linear_gaussian:
      return "linear-gaussian";
    case ModelKind::discrete_hmm:
      return "discrete-hmm";
  }
  return "?";
}

const char* to_string(FilterKind k) {
  switch (k) {
    case FilterKind::pf:
      return "pf";
    case FilterKind::bpf:
      return "bpf";
    case FilterKind::enkf:
      return "enkf";
  }
  return "?";
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  Reader r;
  ExperimentConfig c;
  r.object(j, "config",
           {"model", "seed", "output", "threads", "graph", "partition", "measles", "linear_gaussian", "discrete_hmm",
            "filter", "learning", "evaluation", "compare"});

  std::string model = to_string(c.model);
  r.get(j, "model", model, "config");
  c.model = parse_model(model, r);
  r.get(j, "seed", c.seed, "config");
  r.get(j, "output", c.output, "config");
  r.get(j, "threads", c.threads, "config");
  r.require(c.threads >= 1, "threads: must be at least 1");

  const json& g = sub(j, "graph");
  r.object(g, "graph", {"type", "radius", "labels", "edges"});
  r.get(g, "type", c.graph.type, "graph");
  r.get(g, "radius", c.graph.radius, "graph");
  r.get(g, "labels", c.graph.labels, "graph");
  r.get(g, "edges", c.graph.edges, "graph");
  {
    static const std::set<std::string> types{"", "path", "complete", "edgeless", "explicit"};
    r.require(types.contains(c.graph.type), "graph.type: unknown type '" + c.graph.type + "'");
    for (const auto& [a, b] : c.graph.edges)
      r.require(a < c.graph.labels.size() && b < c.graph.labels.size(), "graph.edges: vertex index out of range");
  }

  const json& p = sub(j, "partition");
  r.object(p, "partition", {"block_size", "blocks"});
  r.get(p, "block_size", c.partition.block_size, "partition");
  r.get(p, "blocks", c.partition.blocks, "partition");
  r.require(c.partition.block_size >= 1, "partition.block_size: must be at least 1");

  const json& m = sub(j, "measles");
  r.object(m, "measles",
           {"cities", "years", "steps_per_obs", "case", "truth_scale", "fixed", "covariates_csv", "distance_csv"});
  r.get(m, "cities", c.measles.cities, "measles");
  r.get(m, "years", c.measles.years, "measles");
  r.get(m, "steps_per_obs", c.measles.steps_per_obs, "measles");
  r.get(m, "case", c.measles.experiment_case, "measles");
  std::vector<double> scale{c.measles.truth_lo, c.measles.truth_hi};
  r.get(m, "truth_scale", scale, "measles");
  r.get(m, "fixed", c.measles.fixed, "measles");
  r.get(m, "covariates_csv", c.measles.covariates_csv, "measles");
  r.get(m, "distance_csv", c.measles.distance_csv, "measles");
  r.require(scale.size() == 2 && scale[0] > 0.0 && scale[0] <= scale[1],
            "measles.truth_scale: expected [lo, hi] with 0 < lo <= hi");
  if (scale.size() == 2) {
    c.measles.truth_lo = scale[0];
    c.measles.truth_hi = scale[1];
  }
  r.require(c.measles.years > 0.0, "measles.years: must be positive");
  r.require(c.measles.steps_per_obs >= 1, "measles.steps_per_obs: must be at least 1");
  r.require(c.measles.experiment_case >= 1 && c.measles.experiment_case <= 4, "measles.case: must be 1, 2, 3 or 4");
  r.require(c.measles.covariates_csv.empty() == c.measles.distance_csv.empty(),
            "measles: covariates_csv and distance_csv go together");
  if (c.model == ModelKind::measles && !c.measles.covariates_csv.empty()) {
    try {
      c.measles.cities = io::read_covariates(c.measles.covariates_csv, c.measles.distance_csv).size();
    } catch (const std::exception& e) {
      r.problems.push_back(std::string("measles covariates: ") + e.what());
    }
  }

  const json& lg = sub(j, "linear_gaussian");
  r.object(lg, "linear_gaussian", {"units", "steps", "a_self", "a_neighbor", "q", "r", "p0"});
  r.get(lg, "units", c.linear_gaussian.units, "linear_gaussian");
  r.get(lg, "steps", c.linear_gaussian.steps, "linear_gaussian");
  r.get(lg, "a_self", c.linear_gaussian.a_self, "linear_gaussian");
  r.get(lg, "a_neighbor", c.linear_gaussian.a_neighbor, "linear_gaussian");
  r.get(lg, "q", c.linear_gaussian.q, "linear_gaussian");
  r.get(lg, "r", c.linear_gaussian.r, "linear_gaussian");
  r.get(lg, "p0", c.linear_gaussian.p0, "linear_gaussian");
  r.require(c.linear_gaussian.steps >= 1, "linear_gaussian.steps: must be at least 1");
  r.require(c.linear_gaussian.q >= 0.0 && c.linear_gaussian.r > 0.0 && c.linear_gaussian.p0 >= 0.0,
            "linear_gaussian: need q >= 0, r > 0, p0 >= 0");

  const json& h = sub(j, "discrete_hmm");
  r.object(h, "discrete_hmm", {"units", "states", "symbols", "steps", "coupling", "model_seed"});
  r.get(h, "units", c.discrete_hmm.units, "discrete_hmm");
  r.get(h, "states", c.discrete_hmm.states, "discrete_hmm");
  r.get(h, "symbols", c.discrete_hmm.symbols, "discrete_hmm");
  r.get(h, "steps", c.discrete_hmm.steps, "discrete_hmm");
  r.get(h, "coupling", c.discrete_hmm.coupling, "discrete_hmm");
  r.get(h, "model_seed", c.discrete_hmm.model_seed, "discrete_hmm");
  r.require(c.discrete_hmm.states >= 1 && c.discrete_hmm.symbols >= 1, "discrete_hmm: alphabets must be nonempty");
  r.require(c.discrete_hmm.steps >= 1, "discrete_hmm.steps: must be at least 1");
  r.require(c.discrete_hmm.coupling >= 0.0, "discrete_hmm.coupling: must be nonnegative");

  const json& f = sub(j, "filter");
  r.object(f, "filter", {"algorithm", "particles", "scheme"});
  std::string filter = to_string(c.filter), scheme = "systematic";
  r.get(f, "algorithm", filter, "filter");
  r.get(f, "particles", c.filter_particles, "filter");
  r.get(f, "scheme", scheme, "filter");
  c.filter = parse_filter(filter, r);
  r.require(c.filter_particles >= 2, "filter.particles: need at least 2");
  if (scheme == "multinomial")
    c.scheme = ResampleScheme::multinomial;
  else
    r.require(scheme == "systematic", "filter.scheme: expected systematic or multinomial");

  const json& l = sub(j, "learning");
  r.object(l, "learning",
           {"algorithms", "particles", "iterations", "replicates", "cooling", "rw_sd", "ivp_sd", "perturbation",
            "search_boxes"});
  std::vector<std::string> algos;
  r.get(l, "algorithms", algos, "learning");
  if (l.is_object() && l.contains("algorithms")) {
    c.learning.algorithms.clear();
    for (const auto& a : algos) {
      try {
        c.learning.algorithms.push_back(algorithm_from_string(a));
      } catch (const std::invalid_argument& e) {
        r.problems.push_back(std::string("learning.algorithms: ") + e.what());
      }
    }
    r.require(!algos.empty(), "learning.algorithms: list at least one algorithm");
  }
  r.get(l, "particles", c.learning.particles, "learning");
  r.get(l, "iterations", c.learning.iterations, "learning");
  r.get(l, "replicates", c.learning.replicates, "learning");
  const json& cool = sub(l, "cooling");
  r.object(cool, "learning.cooling", {"sigma0", "factor"});
  r.get(cool, "sigma0", c.learning.sigma0, "learning.cooling");
  r.get(cool, "factor", c.learning.cooling, "learning.cooling");
  r.get(l, "rw_sd", c.learning.rw_sd, "learning");
  r.get(l, "ivp_sd", c.learning.ivp_sd, "learning");
  r.get(l, "perturbation", c.learning.perturbation, "learning");
  r.get(l, "search_boxes", c.learning.search_boxes, "learning");
  r.require(c.learning.particles >= 2, "learning.particles: need at least 2");
  r.require(c.learning.iterations >= 1, "learning.iterations: need at least 1");
  r.require(c.learning.replicates >= 1, "learning.replicates: need at least 1");
  r.require(c.learning.sigma0 >= 0.0, "learning.cooling.sigma0: must be nonnegative");
  r.require(c.learning.cooling > 0.0 && c.learning.cooling <= 1.0, "learning.cooling.factor: must lie in (0, 1]");
  r.require(c.learning.rw_sd >= 0.0 && c.learning.ivp_sd >= 0.0, "learning: rw_sd and ivp_sd must be nonnegative");
  for (const auto& [name, s] : c.learning.perturbation)
    r.require(s >= 0.0, "learning.perturbation." + name + ": must be nonnegative");

  const json& e = sub(j, "evaluation");
  r.object(e, "evaluation", {"replicates", "particles"});
  r.get(e, "replicates", c.eval_replicates, "evaluation");
  r.get(e, "particles", c.eval_particles, "evaluation");
  r.require(c.eval_replicates >= 1, "evaluation.replicates: need at least 1");
  r.require(c.eval_particles >= 2, "evaluation.particles: need at least 2");

  const json& cmp = sub(j, "compare");
  r.object(cmp, "compare", {"runs"});
  if (cmp.contains("runs")) {
    if (!cmp.at("runs").is_array()) {
      r.problems.push_back("compare.runs: expected an array");
    } else {
      for (const auto& run : cmp.at("runs")) {
        std::string label, dir;
        r.object(run, "compare.runs[]", {"label", "dir"});
        r.get(run, "label", label, "compare.runs[]");
        r.get(run, "dir", dir, "compare.runs[]");
        r.require(!dir.empty(), "compare.runs[]: dir is required");
        c.compare_runs.emplace_back(label.empty() ? dir : label, dir);
      }
    }
  }

  if (r.problems.empty()) cross_checks(c, r);
  if (!r.problems.empty()) throw ConfigError(r.problems);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError({e.what()});
  }
  return parse_config(text);
}

std::string default_config_json() {
  const ExperimentConfig c;
  const auto base = measles::baseline_parameters(1);
  json fixed = json::object();
  for (std::size_t k = 0; k < base.layout.shared_size(); ++k)
    fixed[base.layout.shared_specs()[k].name] = base.shared(k);
  json boxes = json::object();
  for (const char* name : {measles::param::S_0, measles::param::E_0, measles::param::I_0, measles::param::R_0,
                           measles::param::alpha, measles::param::sigmaSE, measles::param::R0}) {
    const auto b = measles::search_box(name);
    boxes[name] = {b.lower, b.upper};
  }
  json j = {
      {"model", "measles"},
      {"seed", c.seed},
      {"output", c.output},
      {"threads", c.threads},
      {"partition", {{"block_size", c.partition.block_size}}},
      {"measles",
       {{"cities", c.measles.cities},
        {"years", c.measles.years},
        {"steps_per_obs", c.measles.steps_per_obs},
        {"case", c.measles.experiment_case},
        {"truth_scale", {c.measles.truth_lo, c.measles.truth_hi}},
        {"fixed", fixed}}},
      {"filter", {{"algorithm", "bpf"}, {"particles", c.filter_particles}, {"scheme", "systematic"}}},
      {"learning",
       {{"algorithms", {"ibpf", "if2", "ienkf"}},
        {"particles", c.learning.particles},
        {"iterations", c.learning.iterations},
        {"replicates", c.learning.replicates},
        {"cooling", {{"sigma0", c.learning.sigma0}, {"factor", c.learning.cooling}}},
        {"rw_sd", c.learning.rw_sd},
        {"ivp_sd", c.learning.ivp_sd},
        {"search_boxes", boxes}}},
      {"evaluation", {{"replicates", c.eval_replicates}, {"particles", c.eval_particles}}},
  };
  return j.dump(2) + "\n";
}

namespace {

SpatialGraph make_graph(const ExperimentConfig& c, std::size_t n, const std::vector<std::string>& default_labels) {
  std::string type = c.graph.type;
  if (type.empty()) type = c.model == ModelKind::measles ? "complete" : "path";
  if (type == "explicit") return SpatialGraph(c.graph.labels, c.graph.edges, c.graph.radius);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (type == "path")
    for (std::size_t v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  if (type == "complete")
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t w = v + 1; w < n; ++w) edges.emplace_back(v, w);
  std::vector<std::string> labels = default_labels;
  if (labels.empty())
    for (std::size_t v = 0; v < n; ++v) labels.push_back(std::to_string(v + 1));
  return SpatialGraph(labels, edges, c.graph.radius);
}

}  // namespace

Setup build_setup(const ExperimentConfig& c) {
  const std::size_t n = unit_count(c);
  std::unique_ptr<Model> model;
  std::vector<std::string> labels;
  std::vector<double> times;
  switch (c.model) {
    case ModelKind::measles: {
      measles::CityCovariates cov = c.measles.covariates_csv.empty()
                                        ? measles::CityCovariates::synthetic(n)
                                        : io::read_covariates(c.measles.covariates_csv, c.measles.distance_csv);
      labels = cov.names;
      measles::MeaslesOptions opt;
      opt.steps_per_obs = c.measles.steps_per_obs;
      auto mm = std::make_unique<measles::MeaslesModel>(std::move(cov), opt);
      times = mm->observation_times(c.measles.years);
      model = std::move(mm);
      break;
    }
    case ModelKind::linear_gaussian:
    case ModelKind::discrete_hmm:
      for (std::size_t k = 1; k <= (c.model == ModelKind::linear_gaussian ? c.linear_gaussian.steps : c.discrete_hmm.steps);
           ++k)
        times.push_back(static_cast<double>(k));
      break;
  }
  SpatialGraph graph = make_graph(c, n, labels);

  if (c.model == ModelKind::linear_gaussian) {
    const auto& lg = c.linear_gaussian;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t w = 0; w < n; ++w) {
        const std::size_t d = graph.distance(v, w);
        if (d == 0) A(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) = lg.a_self;
        if (d == 1) A(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(w)) = lg.a_neighbor;
      }
    const auto N = static_cast<Eigen::Index>(n);
    model = std::make_unique<LinearGaussianLatticeModel>(graph, A, Eigen::VectorXd::Constant(N, lg.q),
                                                         Eigen::VectorXd::Constant(N, lg.r), Eigen::VectorXd::Zero(N),
                                                         lg.p0 * Eigen::MatrixXd::Identity(N, N));
  } else if (c.model == ModelKind::discrete_hmm) {
    const auto& h = c.discrete_hmm;
    model = std::make_unique<DiscreteHMMModel>(
        DiscreteHMMModel::random(graph, h.states, h.symbols, h.coupling, RngKey(h.model_seed)));
  }

  BlockPartition partition = c.partition.blocks.empty() ? build_contiguous_partition(graph, c.partition.block_size)
                                                        : BlockPartition(c.partition.blocks, n);

  const ParamLayout& layout = model->param_layout();
  UnitParameterField base = c.model == ModelKind::measles ? measles::baseline_parameters(n) : UnitParameterField(layout);
  for (const auto& [name, value] : c.measles.fixed) {
    if (c.model != ModelKind::measles) break;
    if (const auto k = layout.find_shared(name)) base.shared(*k) = value;
    if (const auto k = layout.find_unit(name))
      for (std::size_t v = 0; v < n; ++v) base.unit(v, *k) = value;
  }

  PerturbationKernel kernel = PerturbationKernel::none(layout);
  std::vector<double> lower(layout.size(), 0.0), upper(layout.size(), 0.0);
  if (c.model == ModelKind::measles) {
    MeaslesCase mc = measles_case(layout, c.measles.experiment_case, c.learning.rw_sd, c.learning.ivp_sd);
    kernel = std::move(mc.kernel);
    lower = std::move(mc.lower);
    upper = std::move(mc.upper);
  }
  for (const auto& [name, scale] : c.learning.perturbation) {
    if (layout.find_unit(name)) kernel.set_unit(layout, name, scale);
    if (layout.find_shared(name)) kernel.set_shared(layout, name, scale);
  }
  for (const auto& [name, box] : c.learning.search_boxes) {
    if (const auto k = layout.find_unit(name))
      for (std::size_t v = 0; v < n; ++v) {
        lower[layout.unit_index(v, *k)] = box.first;
        upper[layout.unit_index(v, *k)] = box.second;
      }
    if (const auto k = layout.find_shared(name)) {
      lower[layout.shared_index(*k)] = box.first;
      upper[layout.shared_index(*k)] = box.second;
    }
  }

  return Setup{std::move(model), std::move(graph), std::move(partition), std::move(base), 0.0, std::move(times),
               std::move(kernel), std::move(lower), std::move(upper)};
}

UnitParameterField draw_truth(const ExperimentConfig& config, const Setup& setup, RngKey key) {
  if (config.model != ModelKind::measles) return setup.base;
  return measles::draw_truth(setup.base, key, config.measles.truth_lo, config.measles.truth_hi);
}

}  // namespace gpomp
