#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tgd/metrics.hpp"
#include "tgd/observation.hpp"
#include "tgd/prior.hpp"
#include "tgd/reconstruct.hpp"
#include "tgd/schedules.hpp"
#include "tgd/smc.hpp"

namespace tgd::harness {

struct PriorSpec {
    std::size_t dim = 2;
    std::size_t components = 5;
    double tau = 0.005;
    double margin = 0.10;
    std::vector<Vec> means;         // empty = drawn from the seed
    std::vector<double> weights;    // empty = equal
};

struct ObsSpec {
    std::string op = "abs";  // abs | mask
    double sigma_y = 0.01;
    std::vector<std::uint8_t> mask;  // required for op == mask
};

struct GridSpec {
    std::size_t points = 20;
    double s_max = 80.0;
    double s_min = 0.002;
    double curvature = 7.0;
};

struct TemperSpec {
    std::string kind = "uniform";  // uniform | noise
    double lambda_start = 0.0;
    double alpha = 1.0;
};

struct ResampleSpec {
    std::string scheme = "systematic";  // systematic | multinomial
    std::string trigger = "always";     // always | never | ess
    double ess_fraction = 0.5;
};

struct MethodSpec {
    std::string name;
    std::string sampler = "tgd";  // tgd | atgd
    std::string module = "dps";   // uncond | dps | mpgd | daps | hybrid | exact
    int inner_steps = 1;
    double inner_s_min = 0.01;
    double inner_curvature = 7.0;
    double gamma = 0.8;
    double guidance_clip = 1e3;
    double rho = 0.5;  // atgd pruning fraction
    double nu = 0.0;   // hybrid phase-one exponent
    TemperSpec tempering;
    ResampleSpec resample;
    LangevinConfig langevin;
    std::optional<GridSpec> grid;  // per-method override of the run grid
};

struct MetricSpec {
    std::size_t projections = 100;
    int order = 2;
    std::size_t pool_target = 10000;
};

struct RunConfig {
    std::string experiment = "toy2d";
    std::uint64_t seed = 1;
    std::string out_dir = "results";
    std::string format = "csv";  // csv | jsonl
    int threads = 0;             // 0 = environment default
    std::size_t conditions = 10;
    std::size_t repetitions = 1;
    PriorSpec prior;
    ObsSpec observation;
    GridSpec noise_grid;
    MetricSpec metric;
    std::vector<std::size_t> particles{1, 2, 4, 8, 16, 32, 64, 128};
    std::vector<MethodSpec> methods;
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
nlohmann::json config_to_json(const RunConfig& cfg);
void validate_config(const RunConfig& cfg);

// FNV-1a over the canonical (sorted-key) dump of config_to_json.
std::uint64_t config_hash(const RunConfig& cfg);

struct Condition {
    Vec x0_true;
    Vec y;
};

// Everything realized from (config, seed) that the methods share: the prior,
// the observed conditions, the oracle pools they are scored against, and one
// common set of projection directions so distances are comparable across
// methods and particle counts.
struct Problem {
    GaussianMixturePrior prior;
    std::vector<Condition> conditions;
    std::vector<std::unique_ptr<Observation>> observations;  // per condition
    std::vector<SampleSet> oracle;                           // per condition
    std::vector<double> oracle_floor;  // distance between two oracle pools
    std::vector<Vec> projections;
};

Problem build_problem(const RunConfig& cfg);

// Exact posterior samples for one condition (used by build_problem and the
// oracle CLI subcommand).
std::vector<Vec> oracle_samples(const GaussianMixturePrior& prior, const Observation& obs,
                                std::size_t count, RngStream& rng);

struct CellResult {
    std::size_t condition = 0;
    std::string method;
    std::size_t n_particles = 0;
    std::size_t repetition = 0;
    double swd = 0.0;
    double mean_swd = 0.0;
    double ess_final = 0.0;
    std::size_t samples_pooled = 0;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
};

// Buffered per-stage trace line; flushed in deterministic cell order.
struct TraceSink {
    virtual ~TraceSink() = default;
    virtual void line(const std::string& s) = 0;
};

std::vector<CellResult> run_sweep(const RunConfig& cfg, const Problem& problem,
                                  TraceSink* trace = nullptr);

struct AggregateRow {
    std::string method;
    std::size_t n_particles = 0;
    double mean_swd = 0.0;
    double stderr_swd = 0.0;
    std::size_t n_conditions = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells);

// Writes results.(csv|jsonl), aggregate.csv, and meta.json into out_dir.
void emit_results(const RunConfig& cfg, const Problem& problem,
                  const std::vector<CellResult>& cells, const std::string& out_dir);

// Reads a results.csv produced by emit_results (used by the plotdata command).
std::vector<CellResult> read_results_csv(const std::string& path);

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::string& path);

// The default experiment: five methods over the standard grid.
RunConfig default_config();

}  // namespace tgd::harness
