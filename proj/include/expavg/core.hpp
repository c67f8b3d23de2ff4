#pragma once

// Shared domain types: observations, case weights, the zeta grid/prior,
// statistic curves, fit diagnostics, and the contract every model implements.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace expavg {

enum class ErrorCode {
    invalid_argument,
    empty_dataset,
    malformed_record,
    degenerate_data,
    unidentified_direction,
    singular_variance,
    optimizer_inconsistency,
    alignment,
    bandwidth_failure,
    insufficient_draws,
    bootstrap_instability,
    kernel_error,
    config_error,
    io_error,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Observation {
    double v = 0.0;
    int delta = 0;
    double z = 0.0;
};

/// Current-status sample sorted by examination time. Ties in v keep the
/// order in which the records were supplied.
class Dataset {
public:
    Dataset() = default;

    std::span<const Observation> observations() const { return obs_; }
    const Observation& operator[](std::size_t i) const { return obs_[i]; }
    std::size_t size() const { return obs_.size(); }
    /// Position of sorted row i in the input passed to validate_dataset.
    std::size_t original_index(std::size_t i) const { return original_[i]; }

    /// Records in sorted order, as (v, delta, z) triples.
    std::vector<Observation> records() const { return obs_; }

private:
    friend Dataset validate_dataset(std::span<const Observation> raw);
    std::vector<Observation> obs_;
    std::vector<std::size_t> original_;
};

Dataset validate_dataset(std::span<const Observation> raw);

/// Nonnegative case weights summing to n. Default is the unweighted analysis.
class CaseWeights {
public:
    CaseWeights() = default;
    /// Throws invalid_argument unless all w >= 0 and sum(w) = n within 1e-10 n.
    explicit CaseWeights(std::vector<double> w);

    static CaseWeights unit(std::size_t n);
    /// Divides positive raw weights by their mean.
    static CaseWeights standardize(std::span<const double> raw);

    std::span<const double> values() const { return w_; }
    double operator[](std::size_t i) const { return w_[i]; }
    std::size_t size() const { return w_.size(); }

private:
    std::vector<double> w_;
};

/// Quadrature representation of the prior J on zeta.
class ZetaPrior {
public:
    ZetaPrior() = default;
    /// Points strictly increasing, weights positive, summing to one within 1e-12.
    ZetaPrior(std::vector<double> points, std::vector<double> weights);

    std::span<const double> points() const { return points_; }
    std::span<const double> weights() const { return weights_; }
    std::size_t size() const { return points_.size(); }

    /// Restricts to the atoms with keep[g] true and renormalizes the weights.
    ZetaPrior subset(const std::vector<bool>& keep) const;

private:
    std::vector<double> points_;
    std::vector<double> weights_;
};

/// Midpoint rule on [lo, hi] with G cells and equal weights.
ZetaPrior make_uniform_prior(double lo, double hi, std::size_t G);
ZetaPrior point_prior(double zeta0);

/// A statistic evaluated index-for-index over a prior's points. Entries equal
/// to -inf mark infeasible fits.
struct StatCurve {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    bool feasible(std::size_t g) const { return values[g] != kNegInf; }
};

struct FitReport {
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    double final_gradient_norm = 0.0;
};

/// Per-observation score rows (n x p) and their weighted mean.
struct ScoreBlock {
    Eigen::VectorXd mean;
    Eigen::MatrixXd per_obs;
};

/// Base for a model's restricted fit. Concrete models extend it with their
/// nuisance estimates.
struct NullFitState {
    virtual ~NullFitState() = default;
    FitReport report;
};

struct AltEstimate {
    Eigen::VectorXd beta;
    double zeta = 0.0;
    FitReport report;
};

/// Contract between a model bound to one dataset and the testing machinery.
/// Implementations are immutable after construction and reentrant.
class ModelInterface {
public:
    virtual ~ModelInterface() = default;

    virtual std::size_t beta_dim() const = 0;
    virtual std::size_t sample_size() const = 0;
    /// Open interval of admissible zeta values.
    virtual std::pair<double, double> zeta_range() const = 0;

    virtual std::shared_ptr<const NullFitState> fit_null(const CaseWeights& w) const = 0;
    virtual AltEstimate fit_alt(double zeta, const CaseWeights& w,
                                const NullFitState& start) const = 0;
    virtual ScoreBlock score_beta(const NullFitState& nf, double zeta,
                                  const CaseWeights& w) const = 0;
    /// Efficient score for beta at the restricted fit, unweighted.
    virtual ScoreBlock efficient_score(const NullFitState& nf, double zeta) const = 0;
    /// Value under the null restriction, beta = beta0.
    virtual Eigen::VectorXd beta0() const { return Eigen::VectorXd::Zero(beta_dim()); }
};

// Dataset CSV with header `v,delta,z`.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const Dataset& ds);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace expavg
