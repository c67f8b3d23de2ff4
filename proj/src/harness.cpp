#include "expavg/harness.hpp"

#include "expavg/cpcox.hpp"
#include "expavg/gauss_ref.hpp"
#include "expavg/rng.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>

namespace expavg::harness {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void config_fail(const std::string& path, const std::string& msg) {
    throw Error(ErrorCode::config_error, (path.empty() ? "config" : path) + ": " + msg);
}

/// Reads the fields of one JSON object, remembering which were seen so that
/// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) config_fail(path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string sub(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    double number(const std::string& key, double fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number()) config_fail(sub(key), "expected a number");
        return v->get<double>();
    }

    double required_number(const std::string& key) {
        if (!has(key)) config_fail(sub(key), "missing required field");
        return number(key, 0.0);
    }

    std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_number_unsigned()) config_fail(sub(key), "expected a nonnegative integer");
        return v->get<std::uint64_t>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_string()) config_fail(sub(key), "expected a string");
        return v->get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_boolean()) config_fail(sub(key), "expected true or false");
        return v->get<bool>();
    }

    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_array()) config_fail(sub(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            if (!(*v)[i].is_number())
                config_fail(sub(key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back((*v)[i].get<double>());
        }
        return out;
    }

    /// Numbers, or the strings "inf" / "infinity" for the infinite regime.
    std::vector<double> c_values(const std::string& key, const std::vector<double>& fallback) {
        const json* v = find(key);
        if (!v) return fallback;
        if (!v->is_array()) config_fail(sub(key), "expected an array");
        std::vector<double> out;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& e = (*v)[i];
            const std::string at = sub(key) + "[" + std::to_string(i) + "]";
            if (e.is_number()) {
                const double c = e.get<double>();
                if (!(c >= 0.0)) config_fail(at, "c must be nonnegative");
                out.push_back(c);
            } else if (e.is_string() && (e == "inf" || e == "infinity")) {
                out.push_back(kInf);
            } else {
                config_fail(at, "expected a nonnegative number or \"inf\"");
            }
        }
        if (out.empty()) config_fail(sub(key), "must not be empty");
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) config_fail(sub(it.key()), "unknown field");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

GridSpec read_grid(ObjectReader& r) {
    GridSpec g;
    const json* v = r.find("grid");
    if (!v) return g;
    ObjectReader gr(*v, "grid");
    g.lo = gr.number("lo", g.lo);
    g.hi = gr.number("hi", g.hi);
    g.G = gr.unsigned_int("G", g.G);
    gr.finish();
    if (!(g.lo < g.hi)) config_fail("grid", "lo must be below hi");
    if (g.G == 0) config_fail("grid.G", "must be positive");
    return g;
}

std::vector<double> read_alphas(ObjectReader& r, const std::vector<double>& fallback) {
    auto a = r.numbers("alpha_levels", fallback);
    if (a.empty()) config_fail("alpha_levels", "must not be empty");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] > 0.0 && a[i] < 1.0))
            config_fail("alpha_levels[" + std::to_string(i) + "]", "must lie in (0, 1)");
    return a;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config_error, path + ": " + e.what());
    }
}

std::string model_name(ModelKind m) { return m == ModelKind::cpcox_cs ? "cpcox_cs" : "gauss_cp"; }

json report_json(const FitReport& r) {
    return {{"loglik", r.loglik},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"final_gradient_norm", r.final_gradient_norm}};
}

json c_json(double c) { return c == kInf ? json("inf") : json(c); }

std::vector<double> vec(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ObjectReader r(j, "");
    ExperimentConfig cfg;
    const std::string model = r.string("model", "");
    if (model == "cpcox_cs")
        cfg.model = ModelKind::cpcox_cs;
    else if (model == "gauss_cp")
        cfg.model = ModelKind::gauss_cp;
    else
        config_fail("model", "expected \"cpcox_cs\" or \"gauss_cp\"");

    cfg.n = r.unsigned_int("n", cfg.n);
    cfg.reps = r.unsigned_int("reps", cfg.reps);
    cfg.bootstraps = r.unsigned_int("bootstraps", cfg.bootstraps);
    if (cfg.n == 0) config_fail("n", "must be positive");
    if (cfg.reps < 1) config_fail("reps", "must be at least 1");
    if (cfg.bootstraps < 2) config_fail("bootstraps", "must be at least 2");
    cfg.grid = read_grid(r);
    cfg.c_list = r.c_values("c_list", cfg.c_list);
    cfg.alpha_levels = read_alphas(r, cfg.alpha_levels);

    if (const json* t = r.find("truth")) {
        if (t->is_string()) {
            if (*t != "null") config_fail("truth", "expected \"null\" or an object");
        } else {
            ObjectReader tr(*t, "truth");
            cfg.truth.null = false;
            if (cfg.model == ModelKind::cpcox_cs) {
                cfg.truth.beta1 = tr.number("beta1", 0.0);
                cfg.truth.beta2 = tr.number("beta2", 0.0);
                cfg.truth.alpha = tr.number("alpha", 0.0);
                cfg.truth.null = cfg.truth.beta1 == 0.0 && cfg.truth.beta2 == 0.0;
            } else {
                cfg.truth.mu = tr.number("mu", 0.0);
                cfg.truth.beta = tr.number("beta", 0.0);
                cfg.truth.sigma = tr.number("sigma", 1.0);
                if (!(cfg.truth.sigma > 0.0)) config_fail("truth.sigma", "must be positive");
                cfg.truth.null = cfg.truth.beta == 0.0;
            }
            tr.finish();
        }
    }

    if (const json* a = r.find("alt_zeta")) {
        ObjectReader ar(*a, "alt_zeta");
        if (ar.has("point") == ar.has("uniform"))
            config_fail("alt_zeta", "give exactly one of \"point\" or \"uniform\"");
        if (ar.has("point")) {
            cfg.alt_zeta.kind = AltZeta::Kind::point;
            cfg.alt_zeta.point = ar.number("point", 0.5);
            if (!(cfg.alt_zeta.point > 0.0 && cfg.alt_zeta.point < 1.0))
                config_fail("alt_zeta.point", "must lie in (0, 1)");
        } else {
            const auto u = ar.numbers("uniform", {});
            if (u.size() != 2 || !(u[0] < u[1]) || !(u[0] >= 0.0 && u[1] <= 1.0))
                config_fail("alt_zeta.uniform", "expected [lo, hi] with 0 <= lo < hi <= 1");
            cfg.alt_zeta.kind = AltZeta::Kind::uniform;
            cfg.alt_zeta.lo = u[0];
            cfg.alt_zeta.hi = u[1];
        }
        ar.finish();
    }
    if (!cfg.truth.null && cfg.alt_zeta.kind == AltZeta::Kind::none)
        config_fail("alt_zeta", "required when truth is not the null");

    cfg.seed = r.unsigned_int("seed", cfg.seed);
    cfg.max_workers = r.unsigned_int("max_workers", cfg.max_workers);
    if (cfg.max_workers == 0) config_fail("max_workers", "must be positive");
    cfg.naive_zetas = r.numbers("naive_zetas", cfg.naive_zetas);
    for (std::size_t i = 0; i < cfg.naive_zetas.size(); ++i)
        if (!(cfg.naive_zetas[i] > 0.0 && cfg.naive_zetas[i] < 1.0))
            config_fail("naive_zetas[" + std::to_string(i) + "]", "must lie in (0, 1)");
    const std::string form = r.string("observed_form", "wald");
    if (form == "wald")
        cfg.observed_form = ObservedForm::wald;
    else if (form == "score")
        cfg.observed_form = ObservedForm::score;
    else
        config_fail("observed_form", "expected \"wald\" or \"score\"");
    cfg.include_samples = r.boolean("include_samples", false);
    r.finish();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

std::string StatisticResult::label() const {
    if (name == "naive_score") return name + "_" + format_double(zeta);
    return name;
}

TestOutcome analyze(const ModelInterface& model, const ExperimentConfig& cfg,
                    std::uint64_t boot_seed, std::size_t workers) {
    const ZetaPrior prior = make_uniform_prior(cfg.grid.lo, cfg.grid.hi, cfg.grid.G);
    const auto [zlo, zhi] = model.zeta_range();
    const std::size_t p = model.beta_dim();

    TestOutcome out;
    out.zetas.assign(prior.points().begin(), prior.points().end());
    out.grid_size = prior.size();
    std::vector<std::size_t> naive_cols;
    for (double z : cfg.naive_zetas) {
        auto it = std::find_if(out.zetas.begin(), out.zetas.end(),
                               [z](double x) { return std::abs(x - z) < 1e-12; });
        if (it == out.zetas.end()) {
            out.zetas.push_back(z);
            naive_cols.push_back(out.zetas.size() - 1);
        } else {
            naive_cols.push_back(static_cast<std::size_t>(it - out.zetas.begin()));
        }
    }
    for (double z : out.zetas)
        if (!(z > zlo && z < zhi))
            throw Error(ErrorCode::config_error,
                        "zeta=" + format_double(z) + " lies outside the admissible range");

    const CaseWeights unit = CaseWeights::unit(model.sample_size());
    const auto nf = model.fit_null(unit);
    out.null_report = nf->report;
    if (!nf->report.converged)
        throw Error(ErrorCode::optimizer_inconsistency, "null fit did not converge");

    const Eigen::VectorXd b0 = model.beta0();
    std::vector<Eigen::VectorXd> d_obs(out.zetas.size());
    for (std::size_t g = 0; g < out.zetas.size(); ++g) {
        ZetaFit zf;
        zf.zeta = out.zetas[g];
        try {
            const AltEstimate est = model.fit_alt(zf.zeta, unit, *nf);
            zf.report = est.report;
            if (est.report.converged && est.beta.allFinite()) {
                zf.beta = est.beta;
                d_obs[g] = est.beta - b0;
            } else {
                zf.error = "fit did not converge";
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::unidentified_direction) throw;
            zf.error = e.what();
        }
        out.fits.push_back(std::move(zf));
    }

    BootstrapOptions bopt;
    bopt.workers = workers;
    const BootstrapDraws draws = bootstrap_curves(model, out.zetas, cfg.bootstraps, boot_seed, bopt);
    out.summary = summarize(draws);
    out.bootstrap_failures = draws.failures;
    out.bootstrap_seed = boot_seed;
    out.draw_seeds = draws.seeds;

    std::vector<std::size_t> all_cols(out.zetas.size());
    for (std::size_t g = 0; g < all_cols.size(); ++g) all_cols[g] = g;
    out.wald_curve = wald_curve(d_obs, out.summary, all_cols);

    StatCurve observed = out.wald_curve;
    if (cfg.observed_form == ObservedForm::score) {
        std::vector<Eigen::VectorXd> means(out.zetas.size());
        VarianceSource vs;
        vs.tag = VarianceTag::outer_product;
        vs.matrices.resize(out.zetas.size());
        for (std::size_t g = 0; g < out.zetas.size(); ++g) {
            try {
                const ScoreBlock sb = model.efficient_score(*nf, out.zetas[g]);
                means[g] = sb.mean;
                vs.matrices[g] = outer_product(sb.per_obs);
            } catch (const Error&) {
                means[g] = Eigen::VectorXd();
                vs.matrices[g] = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                           static_cast<Eigen::Index>(p));
            }
        }
        observed = score_stat_curve(means, vs, model.sample_size());
    }

    std::vector<std::size_t> grid_cols(out.grid_size);
    for (std::size_t g = 0; g < grid_cols.size(); ++g) grid_cols[g] = g;
    const std::vector<double> grid_obs(observed.values.begin(),
                                       observed.values.begin() + static_cast<std::ptrdiff_t>(out.grid_size));

    auto finish = [&](StatisticResult s) {
        for (double a : cfg.alpha_levels) s.critical_values.push_back(critical_value(s.samples, a));
        s.p_value = p_value(s.observed, s.samples);
        if (!cfg.include_samples) s.samples.clear();
        out.stats.push_back(std::move(s));
    };

    for (double c : cfg.c_list) {
        const ExpAvgConfig ec{c, p};
        StatisticResult s;
        s.name = "ER";
        s.c = c;
        s.samples = standardized_T(draws, out.summary, grid_cols, prior.weights(), ec);
        s.observed = exp_average(grid_obs, prior.weights(), ec);
        finish(std::move(s));
    }
    {
        StatisticResult s;
        s.name = "sup_score";
        s.samples = standardized_sup(draws, out.summary, grid_cols);
        s.observed = sup_stat(StatCurve{grid_obs}).value;
        finish(std::move(s));
    }
    for (std::size_t i = 0; i < naive_cols.size(); ++i) {
        StatisticResult s;
        s.name = "naive_score";
        s.zeta = cfg.naive_zetas[i];
        const std::size_t col = naive_cols[i];
        s.samples = standardized_sup(draws, out.summary, std::span<const std::size_t>(&col, 1));
        s.observed = observed.values[col];
        finish(std::move(s));
    }
    return out;
}

std::unique_ptr<ModelInterface> simulate_model(const ExperimentConfig& cfg, std::uint64_t rep_seed,
                                               double* zeta_out) {
    double zeta = 0.5;
    if (!cfg.truth.null) {
        switch (cfg.alt_zeta.kind) {
        case AltZeta::Kind::point: zeta = cfg.alt_zeta.point; break;
        case AltZeta::Kind::uniform: {
            Engine eng = make_engine(derive_seed(rep_seed, 0));
            zeta = cfg.alt_zeta.lo + (cfg.alt_zeta.hi - cfg.alt_zeta.lo) * uniform_open(eng);
            break;
        }
        case AltZeta::Kind::none:
            throw Error(ErrorCode::config_error, "alt_zeta: required when truth is not the null");
        }
    }
    if (zeta_out) *zeta_out = zeta;
    const std::uint64_t data_seed = derive_seed(rep_seed, 1);
    if (cfg.model == ModelKind::cpcox_cs) {
        cpcox::CPParams truth{cfg.truth.beta1, cfg.truth.beta2, cfg.truth.alpha, zeta};
        if (cfg.truth.null) truth.beta1 = truth.beta2 = 0.0;
        return std::make_unique<cpcox::CpCoxModel>(cpcox::simulate(cfg.n, truth, 5.0, data_seed));
    }
    gauss::GaussCPParams truth{cfg.truth.mu, cfg.truth.null ? 0.0 : cfg.truth.beta,
                               cfg.truth.sigma, zeta};
    return std::make_unique<gauss::GaussCpModel>(gauss::g_simulate(cfg.n, truth, data_seed));
}

void write_simulated(std::ostream& out, const ExperimentConfig& cfg) {
    const auto model = simulate_model(cfg, derive_seed(cfg.seed, 0));
    if (const auto* m = dynamic_cast<const cpcox::CpCoxModel*>(model.get()))
        write_dataset_csv(out, m->dataset());
    else if (const auto* g = dynamic_cast<const gauss::GaussCpModel*>(model.get()))
        gauss::write_gauss_csv(out, g->data());
}

std::string scenario_id(const ExperimentConfig& cfg) {
    if (cfg.truth.null) return "null";
    if (cfg.alt_zeta.kind == AltZeta::Kind::point)
        return "point:" + format_double(cfg.alt_zeta.point);
    return "uniform:" + format_double(cfg.alt_zeta.lo) + ":" + format_double(cfg.alt_zeta.hi);
}

Table1Result run_table1(const ExperimentConfig& cfg) {
    struct RepResult {
        bool ok = false;
        std::vector<StatisticResult> stats;   // samples dropped, critical values kept
    };
    std::vector<RepResult> reps(cfg.reps);
    ExperimentConfig inner = cfg;
    inner.include_samples = false;

    detail::parallel_for(cfg.reps, cfg.max_workers, [&](std::size_t r) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, r);
        try {
            const auto model = simulate_model(inner, rep_seed);
            TestOutcome o = analyze(*model, inner, derive_seed(rep_seed, 2), 1);
            reps[r].stats = std::move(o.stats);
            reps[r].ok = true;
        } catch (const Error& e) {
            if (e.code() == ErrorCode::config_error) throw;
            reps[r].ok = false;
        }
    });

    Table1Result res;
    const RepResult* first = nullptr;
    for (const auto& r : reps) {
        if (r.ok && !first) first = &r;
        if (!r.ok) ++res.failed_replicates;
    }
    if (!first) throw Error(ErrorCode::optimizer_inconsistency, "every replicate failed");
    const std::size_t ok = cfg.reps - res.failed_replicates;
    const std::string scen = scenario_id(cfg);
    for (std::size_t s = 0; s < first->stats.size(); ++s) {
        for (std::size_t a = 0; a < cfg.alpha_levels.size(); ++a) {
            std::size_t rejected = 0;
            for (const auto& r : reps) {
                if (!r.ok) continue;
                const auto& st = r.stats[s];
                if (st.observed > st.critical_values[a]) ++rejected;
            }
            ResultRow row;
            row.scenario = scen;
            row.statistic = first->stats[s].label();
            row.c = first->stats[s].name == "ER" ? first->stats[s].c
                                                 : std::numeric_limits<double>::quiet_NaN();
            row.alpha = cfg.alpha_levels[a];
            row.estimate = static_cast<double>(rejected) / static_cast<double>(ok);
            row.mc_se = std::sqrt(row.estimate * (1.0 - row.estimate) / static_cast<double>(ok));
            row.reps = ok;
            res.rows.push_back(std::move(row));
        }
    }
    return res;
}

void write_table1_csv(std::ostream& out, const Table1Result& res, const ExperimentConfig& cfg) {
    out << "scenario,statistic,c,alpha,estimate,mc_se,reps,model,n,bootstraps,G,seed\n";
    for (const auto& r : res.rows) {
        out << r.scenario << ',' << r.statistic << ',' << (std::isnan(r.c) ? "" : format_c(r.c))
            << ',' << format_double(r.alpha) << ',' << format_double(r.estimate) << ','
            << format_double(r.mc_se) << ',' << r.reps << ',' << model_name(cfg.model) << ','
            << cfg.n << ',' << cfg.bootstraps << ',' << cfg.grid.G << ',' << cfg.seed << '\n';
    }
}

json run_single_test(const std::string& dataset_path, const ExperimentConfig& cfg) {
    std::unique_ptr<ModelInterface> model;
    if (cfg.model == ModelKind::cpcox_cs)
        model = std::make_unique<cpcox::CpCoxModel>(read_dataset_csv(dataset_path));
    else
        model = std::make_unique<gauss::GaussCpModel>(gauss::read_gauss_csv(dataset_path));

    const TestOutcome o = analyze(*model, cfg, cfg.seed, cfg.max_workers);

    json j;
    j["dataset"] = dataset_path;
    j["model"] = model_name(cfg.model);
    j["n"] = model->sample_size();
    j["bootstraps"] = cfg.bootstraps;
    j["seed"] = cfg.seed;
    j["grid"] = {{"lo", cfg.grid.lo}, {"hi", cfg.grid.hi}, {"G", cfg.grid.G}};
    j["observed_form"] = cfg.observed_form == ObservedForm::wald ? "wald" : "score";
    j["zetas"] = o.zetas;
    j["null_fit"] = report_json(o.null_report);

    std::vector<double> logliks;
    json fits = json::array();
    for (const auto& f : o.fits) {
        json fj = report_json(f.report);
        fj["zeta"] = f.zeta;
        fj["beta"] = f.beta.size() ? json(vec(f.beta)) : json(nullptr);
        if (!f.error.empty()) fj["error"] = f.error;
        fits.push_back(fj);
        logliks.push_back(f.beta.size() ? f.report.loglik : std::numeric_limits<double>::quiet_NaN());
    }
    j["fits"] = fits;

    // Curves: -inf (infeasible) entries serialize as null.
    json curves;
    curves["wald"] = o.wald_curve.values;
    curves["lr"] = lr_stat_curve(o.null_report.loglik, logliks).values;
    {
        const auto nf = model->fit_null(CaseWeights::unit(model->sample_size()));
        std::vector<Eigen::VectorXd> means(o.zetas.size());
        VarianceSource vs;
        vs.matrices.resize(o.zetas.size());
        const auto p = static_cast<Eigen::Index>(model->beta_dim());
        for (std::size_t g = 0; g < o.zetas.size(); ++g) {
            try {
                const ScoreBlock sb = model->efficient_score(*nf, o.zetas[g]);
                means[g] = sb.mean;
                vs.matrices[g] = outer_product(sb.per_obs);
            } catch (const Error&) {
                vs.matrices[g] = Eigen::MatrixXd::Identity(p, p);
            }
        }
        curves["score"] = score_stat_curve(means, vs, model->sample_size()).values;
    }
    j["curves"] = curves;

    json boot = to_json(o.summary);
    boot["failures"] = o.bootstrap_failures;
    boot["seed"] = o.bootstrap_seed;
    boot["draw_seeds"] = o.draw_seeds;
    j["bootstrap"] = boot;

    json stats = json::array();
    for (const auto& s : o.stats) {
        json sj;
        sj["statistic"] = s.name;
        if (s.name == "ER") sj["c"] = c_json(s.c);
        if (s.name == "naive_score") sj["zeta"] = s.zeta;
        sj["observed"] = s.observed;
        json cv = json::array();
        for (std::size_t a = 0; a < cfg.alpha_levels.size(); ++a)
            cv.push_back({{"alpha", cfg.alpha_levels[a]},
                          {"critical_value", s.critical_values[a]},
                          {"reject", s.observed > s.critical_values[a]}});
        sj["critical_values"] = cv;
        sj["p_value"] = s.p_value;
        if (cfg.include_samples) sj["samples"] = s.samples;
        stats.push_back(sj);
    }
    j["statistics"] = stats;
    return j;
}

LimitConfig parse_limit_config(const json& j) {
    ObjectReader r(j, "");
    LimitConfig cfg;
    const std::string kernel = r.string("kernel", "gauss_cp");
    if (kernel == "gauss_cp")
        cfg.kernel = LimitConfig::Kernel::gauss_cp;
    else if (kernel == "cpcox_dataset")
        cfg.kernel = LimitConfig::Kernel::cpcox_dataset;
    else
        config_fail("kernel", "expected \"gauss_cp\" or \"cpcox_dataset\"");
    cfg.sigma = r.number("sigma", cfg.sigma);
    if (!(cfg.sigma > 0.0)) config_fail("sigma", "must be positive");
    cfg.dataset = r.string("dataset", "");
    if (cfg.kernel == LimitConfig::Kernel::cpcox_dataset && cfg.dataset.empty())
        config_fail("dataset", "required for the cpcox_dataset kernel");
    cfg.grid = read_grid(r);
    if (r.has("point")) {
        cfg.point = r.number("point", 0.5);
        if (!(*cfg.point > 0.0 && *cfg.point < 1.0)) config_fail("point", "must lie in (0, 1)");
    }
    cfg.c_list = r.c_values("c_list", cfg.c_list);
    cfg.alpha_levels = read_alphas(r, cfg.alpha_levels);
    if (const json* s = r.find("statistics")) {
        if (!s->is_array() || s->empty()) config_fail("statistics", "expected a nonempty array");
        cfg.statistics.clear();
        for (std::size_t i = 0; i < s->size(); ++i) {
            const json& e = (*s)[i];
            if (!e.is_string() || (e != "echi" && e != "supchi"))
                config_fail("statistics[" + std::to_string(i) + "]",
                            "expected \"echi\" or \"supchi\"");
            cfg.statistics.push_back(e.get<std::string>());
        }
    }
    cfg.draws = r.unsigned_int("draws", cfg.draws);
    if (cfg.draws == 0) config_fail("draws", "must be positive");
    cfg.seed = r.unsigned_int("seed", cfg.seed);
    cfg.max_workers = r.unsigned_int("max_workers", cfg.max_workers);
    if (cfg.max_workers == 0) config_fail("max_workers", "must be positive");
    r.finish();
    return cfg;
}

LimitConfig load_limit_config(const std::string& path) {
    return parse_limit_config(read_json_file(path));
}

std::vector<LimitRow> run_limit_table(const LimitConfig& cfg) {
    const ZetaPrior prior = cfg.point ? point_prior(*cfg.point)
                                      : make_uniform_prior(cfg.grid.lo, cfg.grid.hi, cfg.grid.G);
    CovKernel kernel;
    if (cfg.kernel == LimitConfig::Kernel::gauss_cp) {
        const double sigma = cfg.sigma;
        kernel = make_kernel(prior.points(), 1, [sigma](double a, double b) {
            return Eigen::MatrixXd::Constant(1, 1, gauss::g_info_kernel(a, b, sigma));
        });
    } else {
        const cpcox::CpCoxModel model(read_dataset_csv(cfg.dataset));
        const auto nf = model.fit_null(CaseWeights::unit(model.sample_size()));
        if (!nf->report.converged)
            throw Error(ErrorCode::optimizer_inconsistency, "null fit did not converge");
        std::vector<Eigen::MatrixXd> scores;
        for (double z : prior.points()) scores.push_back(model.efficient_score(*nf, z).per_obs);
        kernel = kernel_from_scores(prior.points(), scores);
    }

    LimitOptions opt;
    opt.workers = cfg.max_workers;
    std::vector<LimitRow> rows;
    for (const auto& stat : cfg.statistics) {
        if (stat == "echi") {
            for (double c : cfg.c_list) {
                const LimitSamples s =
                    simulate_echi(kernel, prior, ExpAvgConfig{c, kernel.p}, cfg.draws, cfg.seed, opt);
                for (double a : cfg.alpha_levels)
                    rows.push_back({"echi", c, a, limit_critical_value(s, a), cfg.draws, cfg.seed});
            }
        } else {
            const LimitSamples s = simulate_supchi(kernel, prior, cfg.draws, cfg.seed, opt);
            for (double a : cfg.alpha_levels)
                rows.push_back({"supchi", std::numeric_limits<double>::quiet_NaN(), a,
                                limit_critical_value(s, a), cfg.draws, cfg.seed});
        }
    }
    return rows;
}

}  // namespace expavg::harness
