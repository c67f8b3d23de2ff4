#pragma once

// Configuration-driven experiments: single-dataset tests, the Monte Carlo
// size/power table, and limit-law critical-value tables.

#include "expavg/core.hpp"
#include "expavg/limitlaw.hpp"
#include "expavg/wboot.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace expavg::harness {

enum class ModelKind { cpcox_cs, gauss_cp };

struct GridSpec {
    double lo = 0.05;
    double hi = 0.95;
    std::size_t G = 10;
};

struct AltZeta {
    enum class Kind { none, point, uniform };
    Kind kind = Kind::none;
    double point = 0.5;
    double lo = 0.05;
    double hi = 0.95;
};

/// Generating parameters. For cpcox_cs: beta1, beta2, alpha. For gauss_cp:
/// mu, beta, sigma. `null` zeroes the change-point effect.
struct Truth {
    bool null = true;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double alpha = 0.0;
    double mu = 0.0;
    double beta = 0.0;
    double sigma = 1.0;
};

/// How the observed statistic is formed against the bootstrap replicates:
/// `wald` uses the bootstrap-standardized estimates, `score` the efficient
/// score statistic with its empirical outer-product variance.
enum class ObservedForm { wald, score };

struct ExperimentConfig {
    ModelKind model = ModelKind::cpcox_cs;
    std::size_t n = 300;
    std::size_t reps = 200;
    std::size_t bootstraps = 200;
    GridSpec grid;
    std::vector<double> c_list{0.0, 0.5, 1.0, 3.0, std::numeric_limits<double>::infinity()};
    std::vector<double> alpha_levels{0.05, 0.10};
    Truth truth;
    AltZeta alt_zeta;
    std::uint64_t seed = 1;
    std::size_t max_workers = 1;
    std::vector<double> naive_zetas{0.3, 0.5, 0.9};
    ObservedForm observed_form = ObservedForm::wald;
    bool include_samples = false;
};

/// Strict parse: unknown fields and type mismatches are config_error with the
/// offending field path.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

struct StatisticResult {
    std::string name;      ///< "ER", "sup_score" or "naive_score"
    double c = 0.0;        ///< ER only
    double zeta = 0.0;     ///< naive_score only
    double observed = 0.0;
    std::vector<double> critical_values;   ///< aligned with alpha_levels
    double p_value = 1.0;
    std::vector<double> samples;

    std::string label() const;
};

struct ZetaFit {
    double zeta = 0.0;
    Eigen::VectorXd beta;   ///< empty when the fit failed
    FitReport report;
    std::string error;
};

struct TestOutcome {
    std::vector<double> zetas;           ///< grid points followed by naive points
    std::size_t grid_size = 0;
    FitReport null_report;
    std::vector<ZetaFit> fits;
    StatCurve wald_curve;                ///< uncentered, standardized by the rescaled bootstrap covariance
    BootstrapSummary summary;
    std::size_t bootstrap_failures = 0;
    std::uint64_t bootstrap_seed = 0;
    std::vector<std::uint64_t> draw_seeds;
    std::vector<StatisticResult> stats;
};

/// Full test on one dataset bound into `model`.
TestOutcome analyze(const ModelInterface& model, const ExperimentConfig& cfg,
                    std::uint64_t boot_seed, std::size_t workers);

/// Dataset-bound model for the configured model kind, simulated from the
/// replicate seed. `zeta_out` receives the change point used.
std::unique_ptr<ModelInterface> simulate_model(const ExperimentConfig& cfg,
                                               std::uint64_t rep_seed, double* zeta_out = nullptr);

/// Writes a simulated dataset as CSV (v,delta,z or y,z).
void write_simulated(std::ostream& out, const ExperimentConfig& cfg);

struct ResultRow {
    std::string scenario;
    std::string statistic;
    double c = std::numeric_limits<double>::quiet_NaN();
    double alpha = 0.05;
    double estimate = 0.0;
    double mc_se = 0.0;
    std::size_t reps = 0;
};

struct Table1Result {
    std::vector<ResultRow> rows;
    std::size_t failed_replicates = 0;
};

std::string scenario_id(const ExperimentConfig& cfg);

/// Rejection frequencies over replicates; replicate r draws everything from
/// derive_seed(seed, r). Replicates whose analysis fails are excluded and
/// counted.
Table1Result run_table1(const ExperimentConfig& cfg);

/// Columns scenario,statistic,c,alpha,estimate,mc_se,reps,model,n,bootstraps,G,seed.
void write_table1_csv(std::ostream& out, const Table1Result& res, const ExperimentConfig& cfg);

nlohmann::json run_single_test(const std::string& dataset_path, const ExperimentConfig& cfg);

struct LimitConfig {
    enum class Kernel { gauss_cp, cpcox_dataset };
    Kernel kernel = Kernel::gauss_cp;
    double sigma = 1.0;
    std::string dataset;
    GridSpec grid;
    std::optional<double> point;          ///< point prior instead of the uniform grid
    std::vector<double> c_list{0.0, 0.5, 1.0, 3.0, std::numeric_limits<double>::infinity()};
    std::vector<double> alpha_levels{0.05, 0.10};
    std::vector<std::string> statistics{"echi", "supchi"};
    std::size_t draws = 1000000;
    std::uint64_t seed = 1;
    std::size_t max_workers = 1;
};

LimitConfig parse_limit_config(const nlohmann::json& j);
LimitConfig load_limit_config(const std::string& path);

std::vector<LimitRow> run_limit_table(const LimitConfig& cfg);

}  // namespace expavg::harness
