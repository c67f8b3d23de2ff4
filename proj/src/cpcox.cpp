#include "expavg/cpcox.hpp"

#include "expavg/isotonic.hpp"
#include "expavg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace expavg::cpcox {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStationary = 1e-14;

// log(1 - exp(-x)) for x >= 0.
double log1mexp(double x) {
    if (x <= 0.0) return kNegInf;
    return x < 0.6931471805599453 ? std::log(-std::expm1(-x)) : std::log1p(-std::exp(-x));
}

double obs_loglik(int delta, double x) { return delta ? log1mexp(x) : -x; }

// d^2 l / dr^2 at x = Lambda e^r.
double lambda_q_deriv(int delta, double x) {
    if (!delta) return -x;
    if (x <= 0.0) return 0.0;
    const double one_minus_u = -std::expm1(-x);
    const double a = x * std::exp(-x) / one_minus_u;
    return a - a * x / one_minus_u;
}

// Contiguous ranges of observations sharing one examination time.
struct Layout {
    std::vector<double> knots;
    std::vector<std::size_t> start;   // size m + 1
    std::vector<std::size_t> knot_of; // per observation

    explicit Layout(const Dataset& ds) {
        knot_of.resize(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (i == 0 || ds[i].v != ds[i - 1].v) {
                knots.push_back(ds[i].v);
                start.push_back(i);
            }
            knot_of[i] = knots.size() - 1;
        }
        start.push_back(ds.size());
    }
    std::size_t m() const { return knots.size(); }
};

double total_weight(const CaseWeights& w) {
    double s = 0.0;
    for (double x : w.values()) s += x;
    return s;
}

void check_weights(const Dataset& ds, const CaseWeights& w) {
    if (w.size() != ds.size())
        throw Error(ErrorCode::alignment, "case weights do not match the dataset size");
}

// ICM for Lambda at fixed exponents. Works on per-knot values in place.
class IcmEngine {
public:
    IcmEngine(const Dataset& ds, const Layout& layout, const CaseWeights& w, double cap)
        : ds_(ds), layout_(layout), w_(w.values()), cap_(cap), total_w_(total_weight(w)),
          grad_(layout.m()), curv_(layout.m()), numer_(layout.m()), trial_(layout.m()) {}

    void set_exponents(std::span<const double> e) { e_ = e; }

    double loglik(std::span<const double> lam) const {
        double ll = 0.0;
        for (std::size_t i = 0; i < ds_.size(); ++i) {
            const double wi = w_[i];
            if (wi == 0.0) continue;
            ll += wi * obs_loglik(ds_[i].delta, e_[i] * lam[layout_.knot_of[i]]);
        }
        return ll;
    }

    // Gradient and negated diagonal Hessian in the knot values.
    void derivatives(std::span<const double> lam) {
        for (std::size_t j = 0; j < layout_.m(); ++j) {
            double g = 0.0, c = 0.0;
            for (std::size_t i = layout_.start[j]; i < layout_.start[j + 1]; ++i) {
                const double wi = w_[i];
                if (wi == 0.0) continue;
                const double e = e_[i];
                if (ds_[i].delta) {
                    const double x = e * lam[j];
                    if (x <= 0.0) {
                        g = kInf;
                        c = kInf;
                        continue;
                    }
                    const double u = std::exp(-x);
                    const double omu = -std::expm1(-x);
                    const double ratio = u / omu;
                    g += wi * e * ratio;
                    c += wi * e * e * ratio / omu;
                } else {
                    g -= wi * e;
                }
            }
            grad_[j] = g;
            curv_[j] = c;
        }
    }

    // Largest gain available along the admissible moves of one level set.
    double kkt_violation(std::span<const double> lam) const {
        double worst = 0.0;
        const std::size_t m = layout_.m();
        std::size_t a = 0;
        while (a < m) {
            std::size_t b = a;
            while (b + 1 < m && lam[b + 1] == lam[a]) ++b;
            const double level = lam[a];
            if (level < cap_) {
                double up = 0.0;
                for (std::size_t j = b + 1; j-- > a;) {
                    up += grad_[j];
                    worst = std::max(worst, up);
                }
            }
            if (level > 0.0) {
                double down = 0.0;
                for (std::size_t j = a; j <= b; ++j) {
                    down -= grad_[j];
                    worst = std::max(worst, down);
                }
            }
            a = b + 1;
        }
        if (std::isnan(worst)) return kInf;
        return worst / std::max(total_w_, 1e-300);
    }

    FitReport run(std::vector<double>& lam, double tol, int max_iter) {
        FitReport rep;
        const std::size_t m = layout_.m();
        double ll = loglik(lam);
        derivatives(lam);
        double viol = kkt_violation(lam);
        int it = 0;
        bool stalled = false;   // no gain left that the log-likelihood can resolve
        for (; it < max_iter && viol > tol; ++it) {
            for (std::size_t j = 0; j < m; ++j) numer_[j] = curv_[j] * lam[j] + grad_[j];
            auto cand = pava_cumsum(numer_, curv_);
            double slope = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                cand[j] = std::clamp(cand[j], 0.0, cap_);
                const double d = cand[j] - lam[j];
                if (d != 0.0) slope += grad_[j] * d;
            }
            const bool resolvable = slope > kStationary * (1.0 + std::abs(ll));
            if (!(slope > 0.0)) {
                stalled = true;
                break;
            }
            bool accepted = false;
            if (resolvable) {
                double step = 1.0;
                for (int h = 0; h < 30; ++h, step *= 0.5) {
                    for (std::size_t j = 0; j < m; ++j)
                        trial_[j] = step == 1.0 ? cand[j] : lam[j] + step * (cand[j] - lam[j]);
                    const double ll_trial = loglik(trial_);
                    if (ll_trial >= ll + 1e-4 * step * slope) {
                        lam.swap(trial_);
                        ll = ll_trial;
                        accepted = true;
                        break;
                    }
                }
            }
            if (accepted) {
                derivatives(lam);
                viol = kkt_violation(lam);
                continue;
            }
            // The predicted gain is below the resolution of the log-likelihood:
            // take the full step when it loses nothing and reduces the KKT violation.
            std::copy(cand.begin(), cand.end(), trial_.begin());
            const double ll_trial = loglik(trial_);
            if (!(ll_trial >= ll)) {
                stalled = !resolvable;
                break;
            }
            derivatives(trial_);
            const double viol_trial = kkt_violation(trial_);
            if (!(viol_trial < viol)) {
                derivatives(lam);
                stalled = !resolvable;
                break;
            }
            lam.swap(trial_);
            ll = ll_trial;
            viol = viol_trial;
        }
        rep.loglik = ll;
        rep.iterations = it;
        rep.final_gradient_norm = viol;
        rep.converged = viol <= tol || stalled;
        return rep;
    }

private:
    const Dataset& ds_;
    const Layout& layout_;
    std::span<const double> w_;
    std::span<const double> e_;
    double cap_;
    double total_w_;
    std::vector<double> grad_, curv_, numer_, trial_;
};

bool has_event_and_nonevent(const Dataset& ds, const CaseWeights& w) {
    bool ev = false, nonev = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (w[i] <= 0.0) continue;
        (ds[i].delta ? ev : nonev) = true;
    }
    return ev && nonev;
}

std::vector<double> initial_values(const Dataset& ds, const Layout& layout, const CaseWeights& w,
                                   double cap) {
    const std::size_t m = layout.m();
    std::vector<double> numer(m, 0.0), denom(m, 0.0);
    std::size_t first_event = m;
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = layout.start[j]; i < layout.start[j + 1]; ++i) {
            numer[j] += w[i] * ds[i].delta;
            denom[j] += w[i];
            if (ds[i].delta && w[i] > 0.0) first_event = std::min(first_event, j);
        }
    }
    auto F = pava_cumsum(numer, denom);
    std::vector<double> lam(m);
    for (std::size_t j = 0; j < m; ++j) {
        double v = F[j] >= 1.0 ? cap : -std::log1p(-std::max(F[j], 0.0));
        if (j >= first_event) v = std::max(v, 1e-6);
        lam[j] = std::clamp(v, 0.0, cap);
    }
    return lam;
}

// Alternating maximization over (xi, Lambda) with xi entering r = X xi.
struct JointResult {
    std::vector<double> xi;
    std::vector<double> lam;
    FitReport report;
};

JointResult joint_fit(const Dataset& ds, const Layout& layout, const CaseWeights& w,
                      const Eigen::MatrixXd& X, std::vector<double> xi, std::vector<double> lam,
                      const FitOptions& opt) {
    const std::size_t n = ds.size();
    const std::size_t k = static_cast<std::size_t>(X.cols());
    const double cap = opt.icm.cap;
    const double tw = total_weight(w);
    IcmEngine icm(ds, layout, w, cap);
    std::vector<double> e(n), e_trial(n), lam_trial(lam.size());

    auto exponents = [&](const std::vector<double>& x, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.0;
            for (std::size_t c = 0; c < k; ++c) r += X(i, c) * x[c];
            out[i] = std::exp(r);
        }
    };

    exponents(xi, e);
    icm.set_exponents(e);
    FitReport icm_rep = icm.run(lam, opt.icm.tol, opt.icm.max_iter);
    double ll = icm_rep.loglik;

    const std::size_t dim = k + 1;   // xi plus the log-scale of Lambda
    Eigen::VectorXd grad(dim);
    Eigen::MatrixXd neg_hess(dim, dim);
    std::vector<char> scalable(lam.size());
    JointResult out;
    bool loop_converged = false;
    bool diverged = false;
    int outer = 0;

    for (; outer < opt.max_outer; ++outer) {
        // Newton step in (xi, s), with Lambda -> e^s Lambda on knots strictly inside (0, M).
        bool any_scalable = false;
        for (std::size_t j = 0; j < lam.size(); ++j) {
            scalable[j] = lam[j] > 0.0 && lam[j] < cap;
            any_scalable = any_scalable || scalable[j];
        }
        const std::size_t d_used = any_scalable ? dim : k;
        grad.setZero();
        neg_hess.setZero();
        Eigen::VectorXd row(dim);
        for (std::size_t i = 0; i < n; ++i) {
            const double wi = w[i];
            if (wi == 0.0) continue;
            const std::size_t j = layout.knot_of[i];
            const double x = e[i] * lam[j];
            const double lr = lambda_q(ds[i].delta, x);
            const double lrr = lambda_q_deriv(ds[i].delta, x);
            for (std::size_t c = 0; c < k; ++c) row[c] = X(i, c);
            row[k] = scalable[j] ? 1.0 : 0.0;
            grad.head(d_used) += wi * lr * row.head(d_used);
            neg_hess.topLeftCorner(d_used, d_used).noalias() -=
                wi * lrr * row.head(d_used) * row.head(d_used).transpose();
        }
        // Coordinates held at the box face by an outward gradient stay fixed.
        const double bound = opt.param_bound;
        std::vector<char> held(k, 0);
        for (std::size_t c = 0; c < k; ++c)
            held[c] = (xi[c] >= bound && grad[c] > 0.0) || (xi[c] <= -bound && grad[c] < 0.0);
        Eigen::MatrixXd A = neg_hess.topLeftCorner(d_used, d_used);
        Eigen::VectorXd g = grad.head(d_used);
        for (std::size_t c = 0; c < k; ++c) {
            if (!held[c]) continue;
            A.row(c).setZero();
            A.col(c).setZero();
            A(c, c) = 1.0;
            g[c] = 0.0;
        }
        Eigen::VectorXd dir;
        {
            Eigen::LLT<Eigen::MatrixXd> llt(A);
            double ridge = 1e-6 * (1.0 + std::abs(A.trace()));
            for (int attempt = 0; attempt < 12 && llt.info() != Eigen::Success; ++attempt) {
                llt.compute(A + ridge * Eigen::MatrixXd::Identity(d_used, d_used));
                ridge *= 10.0;
            }
            dir = llt.info() == Eigen::Success ? Eigen::VectorXd(llt.solve(g)) : g;
        }

        std::vector<double> xi_trial(k);
        double ll_newton = ll;
        double t = 1.0;
        auto line_search = [&](const Eigen::VectorXd& d) {
            t = 1.0;
            for (int h = 0; h < 40; ++h, t *= 0.5) {
                for (std::size_t c = 0; c < k; ++c)
                    xi_trial[c] = std::clamp(xi[c] + t * d[c], -bound, bound);
                const double scale = d_used > k ? std::exp(t * d[k]) : 1.0;
                for (std::size_t j = 0; j < lam.size(); ++j)
                    lam_trial[j] = scalable[j] ? std::min(cap, lam[j] * scale) : lam[j];
                exponents(xi_trial, e_trial);
                icm.set_exponents(e_trial);
                const double ll_trial = icm.loglik(lam_trial);
                if (ll_trial >= ll) {
                    ll_newton = ll_trial;
                    return true;
                }
            }
            return false;
        };
        // Predicted gain of the full Newton step; small on flat ridges.
        const double decrement = g.dot(dir);
        bool moved = line_search(dir);
        if (!moved) {
            // Projection onto the box can spoil the Newton direction; fall back
            // to the diagonally scaled gradient.
            dir = g.cwiseQuotient(A.diagonal().cwiseAbs().cwiseMax(1e-12));
            moved = line_search(dir);
        }
        double step_norm = 0.0;
        if (moved) {
            for (std::size_t c = 0; c < k; ++c)
                step_norm = std::max(step_norm, std::abs(xi_trial[c] - xi[c]));
            if (d_used > k) step_norm = std::max(step_norm, std::abs(t * dir[k]));
            xi = xi_trial;
            lam.swap(lam_trial);
            e.swap(e_trial);
        }
        icm.set_exponents(e);
        icm_rep = icm.run(lam, opt.icm.tol, opt.icm.max_iter);
        const double ll_new = std::max(icm_rep.loglik, moved ? ll_newton : ll);
        const double change = std::abs(ll_new - ll);
        ll = ll_new;

        if (!std::isfinite(ll)) {
            diverged = true;
            ++outer;
            break;
        }
        if (change < opt.loglik_tol && (step_norm < opt.step_tol || decrement < opt.loglik_tol)) {
            loop_converged = true;
            ++outer;
            break;
        }
    }

    // Exit diagnostics: projected gradient in xi (per unit weight) and the Lambda KKT violation.
    Eigen::VectorXd gxi = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (w[i] == 0.0) continue;
        const double x = e[i] * lam[layout.knot_of[i]];
        const double lr = lambda_q(ds[i].delta, x);
        for (std::size_t c = 0; c < k; ++c) gxi[c] += w[i] * lr * X(i, c);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if ((xi[c] >= opt.param_bound && gxi[c] > 0.0) || (xi[c] <= -opt.param_bound && gxi[c] < 0.0))
            gxi[c] = 0.0;
    }
    const double gnorm = std::max(gxi.norm() / std::max(tw, 1e-300), icm_rep.final_gradient_norm);

    out.xi = std::move(xi);
    out.lam = std::move(lam);
    out.report.loglik = ll;
    out.report.iterations = outer;
    out.report.final_gradient_norm = gnorm;
    out.report.converged = loop_converged && !diverged && gnorm <= opt.grad_tol;
    return out;
}

Eigen::MatrixXd alt_design(const Dataset& ds, double zeta) {
    Eigen::MatrixXd X(ds.size(), 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double z = ds[i].z;
        const double ind = z > zeta ? 1.0 : 0.0;
        X(i, 0) = ind;
        X(i, 1) = z * ind;
        X(i, 2) = z;
    }
    return X;
}

Eigen::MatrixXd null_design(const Dataset& ds) {
    Eigen::MatrixXd X(ds.size(), 1);
    for (std::size_t i = 0; i < ds.size(); ++i) X(i, 0) = ds[i].z;
    return X;
}

std::vector<double> values_on_layout(const StepCumHazard& L, const Layout& layout) {
    std::vector<double> lam(layout.m());
    for (std::size_t j = 0; j < layout.m(); ++j) lam[j] = L(layout.knots[j]);
    return lam;
}

}  // namespace

double r_gamma(double z, const CPParams& p) {
    return p.alpha * z + (z > p.zeta ? p.beta1 + p.beta2 * z : 0.0);
}

StepCumHazard::StepCumHazard(std::vector<double> knots, std::vector<double> values, double cap)
    : knots_(std::move(knots)), values_(std::move(values)), cap_(cap) {
    if (knots_.size() != values_.size())
        throw Error(ErrorCode::invalid_argument, "hazard knots and values differ in length");
    if (!(cap_ > 0.0)) throw Error(ErrorCode::invalid_argument, "hazard cap must be positive");
    for (std::size_t j = 0; j < knots_.size(); ++j) {
        if (j > 0 && !(knots_[j] > knots_[j - 1]))
            throw Error(ErrorCode::invalid_argument, "hazard knots must be strictly increasing");
        if (j > 0 && values_[j] < values_[j - 1])
            throw Error(ErrorCode::invalid_argument, "hazard values must be nondecreasing");
        if (!(values_[j] >= 0.0 && values_[j] <= cap_))
            throw Error(ErrorCode::invalid_argument, "hazard values must lie in [0, M]");
    }
}

double StepCumHazard::operator()(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 0.0;
    return values_[static_cast<std::size_t>(it - knots_.begin()) - 1];
}

StepCumHazard StepCumHazard::zeros_on(const Dataset& ds, double cap) {
    Layout layout(ds);
    return StepCumHazard(layout.knots, std::vector<double>(layout.m(), 0.0), cap);
}

double loglik(const Dataset& ds, const CPParams& params, const StepCumHazard& Lambda,
              const CaseWeights& w) {
    check_weights(ds, w);
    double ll = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (w[i] == 0.0) continue;
        const auto& o = ds[i];
        ll += w[i] * obs_loglik(o.delta, Lambda(o.v) * std::exp(r_gamma(o.z, params)));
    }
    return ll;
}

double loglik(const Dataset& ds, const CPParams& params, const StepCumHazard& Lambda) {
    return loglik(ds, params, Lambda, CaseWeights::unit(ds.size()));
}

Dataset simulate(std::size_t n, const CPParams& truth, double v_max, std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "simulate needs n >= 1");
    if (!(v_max > 0.0)) throw Error(ErrorCode::invalid_argument, "v_max must be positive");
    auto eng = make_engine(seed);
    std::vector<Observation> raw(n);
    for (auto& o : raw) {
        o.z = std::generate_canonical<double, 53>(eng);
        o.v = v_max * std::generate_canonical<double, 53>(eng);
        const double u = uniform_open(eng);
        const double t = std::sqrt(-std::log(u) / (3.0 * std::exp(r_gamma(o.z, truth))));
        o.delta = t <= o.v ? 1 : 0;
    }
    return validate_dataset(raw);
}

StepCumHazard initial_hazard(const Dataset& ds, const CaseWeights& w, double cap) {
    check_weights(ds, w);
    Layout layout(ds);
    return StepCumHazard(layout.knots, initial_values(ds, layout, w, cap), cap);
}

IcmResult icm_fit(const Dataset& ds, std::span<const double> exponents, const CaseWeights& w,
                  const std::optional<StepCumHazard>& init, const IcmOptions& opt) {
    check_weights(ds, w);
    if (exponents.size() != ds.size())
        throw Error(ErrorCode::alignment, "one exponent per observation is required");
    for (double e : exponents)
        if (!(e > 0.0) || !std::isfinite(e))
            throw Error(ErrorCode::invalid_argument, "exponents must be positive and finite");
    Layout layout(ds);
    bool any_event = false;
    for (std::size_t i = 0; i < ds.size(); ++i) any_event = any_event || (ds[i].delta && w[i] > 0.0);
    if (!any_event) {
        IcmResult res{StepCumHazard(layout.knots, std::vector<double>(layout.m(), 0.0), opt.cap), {}};
        res.report.converged = true;
        return res;
    }
    std::vector<double> lam = init ? values_on_layout(*init, layout) : initial_values(ds, layout, w, opt.cap);
    for (auto& v : lam) v = std::clamp(v, 0.0, opt.cap);
    IcmEngine engine(ds, layout, w, opt.cap);
    engine.set_exponents(exponents);
    if (!std::isfinite(engine.loglik(lam))) lam = initial_values(ds, layout, w, opt.cap);
    FitReport rep = engine.run(lam, opt.tol, opt.max_iter);
    return {StepCumHazard(layout.knots, std::move(lam), opt.cap), rep};
}

NullFit fit_null(const Dataset& ds, const CaseWeights& w, const FitOptions& opt) {
    check_weights(ds, w);
    if (!has_event_and_nonevent(ds, w))
        throw Error(ErrorCode::degenerate_data, "null fit needs both events and non-events");
    Layout layout(ds);
    auto res = joint_fit(ds, layout, w, null_design(ds), {0.0},
                         initial_values(ds, layout, w, opt.icm.cap), opt);
    NullFit nf;
    nf.alpha_hat = res.xi[0];
    nf.Lambda_hat = StepCumHazard(layout.knots, std::move(res.lam), opt.icm.cap);
    nf.report = res.report;
    return nf;
}

AltFit fit_alt(const Dataset& ds, double zeta, const CaseWeights& w, const NullFit& start,
               const FitOptions& opt) {
    check_weights(ds, w);
    bool above = false, below = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (w[i] <= 0.0) continue;
        (ds[i].z > zeta ? above : below) = true;
    }
    if (!above || !below)
        throw Error(ErrorCode::unidentified_direction,
                    "zeta = " + format_double(zeta) + " has no observations on " +
                        (above ? "or below it" : "its upper side"));
    if (!has_event_and_nonevent(ds, w))
        throw Error(ErrorCode::degenerate_data, "alternative fit needs both events and non-events");
    Layout layout(ds);
    auto res = joint_fit(ds, layout, w, alt_design(ds, zeta), {0.0, 0.0, start.alpha_hat},
                         values_on_layout(start.Lambda_hat, layout), opt);
    AltFit af;
    af.beta_hat = {res.xi[0], res.xi[1]};
    af.alpha_hat = res.xi[2];
    af.Lambda_hat = StepCumHazard(layout.knots, std::move(res.lam), opt.icm.cap);
    af.zeta = zeta;
    af.report = res.report;
    return af;
}

AltFit fit_alt(const Dataset& ds, double zeta, const CaseWeights& w, const FitOptions& opt) {
    return fit_alt(ds, zeta, w, fit_null(ds, w, opt), opt);
}

double lambda_q(int delta, double x) {
    if (!delta) return -x;
    if (x <= 0.0) return 1.0;
    return x * std::exp(-x) / -std::expm1(-x);
}

ScoreResult score_beta(const Dataset& ds, const NullFit& nf, double zeta, const CaseWeights& w) {
    check_weights(ds, w);
    ScoreResult out;
    out.per_obs.resize(static_cast<Eigen::Index>(ds.size()), 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& o = ds[i];
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        if (o.z > zeta) {
            const double x = nf.Lambda_hat(o.v) * std::exp(nf.alpha_hat * o.z);
            const double lq = lambda_q(o.delta, x);
            out.per_obs(r, 0) = lq;
            out.per_obs(r, 1) = o.z * lq;
            out.mean += w[i] * out.per_obs.row(r).transpose();
        } else {
            out.per_obs.row(r).setZero();
        }
    }
    out.mean /= static_cast<double>(ds.size());
    return out;
}

Eigen::MatrixX3d score_xi(const Dataset& ds, const NullFit& nf, double zeta) {
    Eigen::MatrixX3d s(static_cast<Eigen::Index>(ds.size()), 3);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& o = ds[i];
        const double ind = o.z > zeta ? 1.0 : 0.0;
        const double lq = lambda_q(o.delta, nf.Lambda_hat(o.v) * std::exp(nf.alpha_hat * o.z));
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        s(r, 0) = ind * lq;
        s(r, 1) = ind * o.z * lq;
        s(r, 2) = o.z * lq;
    }
    return s;
}

Eigen::MatrixX2d project_out_alpha(const Eigen::MatrixX3d& resid) {
    const double n = static_cast<double>(resid.rows());
    const Eigen::Matrix3d info = resid.transpose() * resid / n;
    Eigen::Vector2d coef = Eigen::Vector2d::Zero();
    if (info(2, 2) > 0.0) coef = info.block<2, 1>(0, 2) / info(2, 2);
    Eigen::MatrixX2d out = resid.leftCols<2>();
    out.col(0) -= coef[0] * resid.col(2);
    out.col(1) -= coef[1] * resid.col(2);
    return out;
}

EfficientScore efficient_score(const Dataset& ds, const NullFit& nf, double zeta,
                               const EffScoreConfig& cfg) {
    const std::size_t n = ds.size();
    const Eigen::Index nn = static_cast<Eigen::Index>(n);
    std::vector<double> q2(n), lq(n);
    Eigen::MatrixX3d Z(nn, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = ds[i];
        const double er = std::exp(nf.alpha_hat * o.z);
        const double L = nf.Lambda_hat(o.v);
        const double x = L * er;
        double q;
        if (o.delta) q = x > 0.0 ? er * std::exp(-x) / -std::expm1(-x) : kInf;
        else q = -er;
        q2[i] = q * q;
        lq[i] = lambda_q(o.delta, x);
        const double ind = o.z > zeta ? 1.0 : 0.0;
        Z(static_cast<Eigen::Index>(i), 0) = ind;
        Z(static_cast<Eigen::Index>(i), 1) = ind * o.z;
        Z(static_cast<Eigen::Index>(i), 2) = o.z;
    }
    for (double v : q2)
        if (!std::isfinite(v))
            throw Error(ErrorCode::degenerate_data, "efficient score needs a feasible null fit");

    Eigen::MatrixX3d h(nn, 3);
    EfficientScore out;
    if (cfg.unconditional) {
        Eigen::RowVector3d num = Eigen::RowVector3d::Zero();
        double den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num += q2[i] * Z.row(static_cast<Eigen::Index>(i));
            den += q2[i];
        }
        if (!(den > 0.0)) throw Error(ErrorCode::bandwidth_failure, "all Q vanish");
        h.rowwise() = num / den;
    } else {
        double bw = 0.0;
        if (cfg.bandwidth) {
            bw = *cfg.bandwidth;
            if (!(bw > 0.0)) throw Error(ErrorCode::invalid_argument, "bandwidth must be positive");
        } else {
            double mean = 0.0;
            for (const auto& o : ds.observations()) mean += o.v;
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (const auto& o : ds.observations()) var += (o.v - mean) * (o.v - mean);
            var /= std::max<double>(1.0, static_cast<double>(n) - 1.0);
            bw = 1.06 * std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
            if (!(bw > 0.0)) bw = 1.0;
        }
        bool ok = false;
        for (int widen = 0; widen <= 3 && !ok; ++widen, bw *= 2.0) {
            ok = true;
            const double reach = 8.0 * bw;
            std::size_t lo = 0, hi = 0;
            for (std::size_t i = 0; i < n && ok; ++i) {
                const double vi = ds[i].v;
                while (ds[lo].v < vi - reach) ++lo;
                while (hi < n && ds[hi].v <= vi + reach) ++hi;
                Eigen::RowVector3d num = Eigen::RowVector3d::Zero();
                double den = 0.0;
                // Leave-one-out: an event with tiny Lambda carries a huge Q^2
                // and would otherwise fit its own Z.
                for (std::size_t k = lo; k < hi; ++k) {
                    if (k == i) continue;
                    const double u = (ds[k].v - vi) / bw;
                    const double kw = std::exp(-0.5 * u * u) * q2[k];
                    num += kw * Z.row(static_cast<Eigen::Index>(k));
                    den += kw;
                }
                if (!(den > 0.0) || !std::isfinite(den)) {
                    ok = false;
                    break;
                }
                h.row(static_cast<Eigen::Index>(i)) = num / den;
            }
            if (ok) out.bandwidth_used = bw;
        }
        if (!ok)
            throw Error(ErrorCode::bandwidth_failure,
                        "kernel denominator vanishes after widening the bandwidth 3 times");
    }

    Eigen::MatrixX3d resid(nn, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        resid.row(r) = (Z.row(r) - h.row(r)) * lq[i];
    }
    out.per_obs = project_out_alpha(resid);
    out.info = out.per_obs.transpose() * out.per_obs / static_cast<double>(n);
    return out;
}

}  // namespace expavg::cpcox
