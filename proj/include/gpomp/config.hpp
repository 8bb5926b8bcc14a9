#pragma once

// Experiment configuration: a single JSON document, validated in full before
// any computation, plus construction of the model, graph and partition it
// describes.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpomp/experiment.hpp"
#include "gpomp/filters.hpp"
#include "gpomp/graph.hpp"
#include "gpomp/learning.hpp"
#include "gpomp/model.hpp"

namespace gpomp {

/// Every problem found in a configuration, reported together.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::vector<std::string>& problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class ModelKind { measles, linear_gaussian, discrete_hmm };
enum class FilterKind { pf, bpf, enkf };

struct GraphConfig {
  std::string type;  // default per model; path | complete | edgeless | explicit
  std::size_t radius = 1;
  std::vector<std::string> labels;  // explicit only
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

struct PartitionConfig {
  std::size_t block_size = 2;
  std::vector<std::vector<std::size_t>> blocks;  // explicit blocks win over block_size
};

struct MeaslesConfig {
  std::size_t cities = 2;
  double years = 15.0;
  std::size_t steps_per_obs = 7;
  int experiment_case = 1;
  double truth_lo = 0.99;
  double truth_hi = 1.0355;
  std::map<std::string, double> fixed;  // overrides for baseline values, shared or per-unit
  std::string covariates_csv;           // optional: city,time,population,births
  std::string distance_csv;             // optional: city_a,city_b,distance
};

struct LinearGaussianConfig {
  std::size_t units = 3;
  std::size_t steps = 50;
  double a_self = 0.6;
  double a_neighbor = 0.2;
  double q = 1.0;
  double r = 1.0;
  double p0 = 1.0;
};

struct DiscreteHMMConfig {
  std::size_t units = 2;
  std::size_t states = 2;
  std::size_t symbols = 2;
  std::size_t steps = 10;
  double coupling = 1.5;
  std::uint64_t model_seed = 1;
};

struct LearningConfig {
  std::vector<Algorithm> algorithms{Algorithm::ibpf, Algorithm::if2, Algorithm::ienkf};
  std::size_t particles = 1000;
  std::size_t iterations = 10;
  std::size_t replicates = 10;
  double sigma0 = 1.0;
  double cooling = 0.95;
  double rw_sd = 0.02;
  double ivp_sd = 0.2;
  std::map<std::string, double> perturbation;                  // per-parameter scale overrides
  std::map<std::string, std::pair<double, double>> search_boxes;  // overrides / additions
};

struct ExperimentConfig {
  ModelKind model = ModelKind::measles;
  GraphConfig graph;
  PartitionConfig partition;
  MeaslesConfig measles;
  LinearGaussianConfig linear_gaussian;
  DiscreteHMMConfig discrete_hmm;
  FilterKind filter = FilterKind::bpf;
  std::size_t filter_particles = 1000;
  ResampleScheme scheme = ResampleScheme::systematic;
  LearningConfig learning;
  std::size_t eval_replicates = 5;
  std::size_t eval_particles = 1000;
  std::uint64_t seed = 1;
  std::string output = "out";
  unsigned threads = 1;
  std::vector<std::pair<std::string, std::string>> compare_runs;  // label, directory
};

/// Parses and validates; throws ConfigError listing every problem.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
/// The defaults as a JSON document (what an empty config means).
std::string default_config_json();

const char* to_string(ModelKind k);
const char* to_string(FilterKind k);

/// Everything the commands need that follows from the configuration alone.
struct Setup {
  std::unique_ptr<Model> model;
  SpatialGraph graph;
  BlockPartition partition;
  UnitParameterField base;     // fixed values; learned coordinates start from search boxes
  double t0 = 0.0;
  std::vector<double> times;   // observation grid for simulation
  PerturbationKernel kernel;
  std::vector<double> lower, upper;  // search boxes by flat coordinate
};

Setup build_setup(const ExperimentConfig& config);

/// Truth draw for simulation (measles: scaled baseline; oracle models: base).
UnitParameterField draw_truth(const ExperimentConfig& config, const Setup& setup, RngKey key);

}  // namespace gpomp
