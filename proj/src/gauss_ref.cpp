#include "expavg/gauss_ref.hpp"

#include "expavg/rng.hpp"

#include "csv.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

namespace expavg::gauss {

namespace {

double gauss_loglik(double wsum, double var) {
    return -0.5 * wsum * (std::log(2.0 * std::numbers::pi * var) + 1.0);
}

std::string zeta_label(double zeta) { return "zeta=" + format_double(zeta); }

}  // namespace

GaussData g_simulate(std::size_t n, const GaussCPParams& params, std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "g_simulate: n must be positive");
    if (!(params.sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma must be positive");
    Engine eng = make_engine(seed);
    std::normal_distribution<double> norm(0.0, 1.0);
    GaussData out(n);
    for (auto& o : out) {
        o.z = uniform_open(eng);
        o.y = params.mu + (o.z > params.zeta ? params.beta : 0.0) + params.sigma * norm(eng);
    }
    return out;
}

Eigen::VectorXd g_efficient_score(const GaussData& data, double zeta, double mu_hat,
                                  double sigma_hat) {
    if (!(sigma_hat > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma_hat must be positive");
    const double s2 = sigma_hat * sigma_hat;
    Eigen::VectorXd out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double ind = data[i].z > zeta ? 1.0 : 0.0;
        out[i] = (ind - (1.0 - zeta)) * (data[i].y - mu_hat) / s2;
    }
    return out;
}

Eigen::VectorXd g_efficient_score_centered(const GaussData& data, double zeta, double mu_hat,
                                           double sigma_hat) {
    if (!(sigma_hat > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma_hat must be positive");
    if (data.empty()) return {};
    double above = 0.0;
    for (const auto& o : data) above += o.z > zeta ? 1.0 : 0.0;
    const double frac = above / static_cast<double>(data.size());
    const double s2 = sigma_hat * sigma_hat;
    Eigen::VectorXd out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double ind = data[i].z > zeta ? 1.0 : 0.0;
        out[i] = (ind - frac) * (data[i].y - mu_hat) / s2;
    }
    return out;
}

double g_info_kernel(double zeta1, double zeta2, double sigma) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "sigma must be positive");
    return ((1.0 - std::max(zeta1, zeta2)) - (1.0 - zeta1) * (1.0 - zeta2)) / (sigma * sigma);
}

GaussFits g_fits(const GaussData& data, double zeta, const CaseWeights& w) {
    if (data.empty()) throw Error(ErrorCode::empty_dataset, "empty-dataset");
    if (w.size() != data.size())
        throw Error(ErrorCode::alignment, "weights and data differ in length");
    double W = 0.0, Sy = 0.0, Wa = 0.0, Sa = 0.0;
    std::size_t n_above = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        W += w[i];
        Sy += w[i] * data[i].y;
        if (data[i].z > zeta) {
            ++n_above;
            Wa += w[i];
            Sa += w[i] * data[i].y;
        }
    }
    if (n_above == 0 || n_above == data.size())
        throw Error(ErrorCode::unidentified_direction,
                    "no observations on one side of " + zeta_label(zeta));
    const double Wb = W - Wa;
    if (!(Wa > 0.0) || !(Wb > 0.0))
        throw Error(ErrorCode::unidentified_direction,
                    "zero weight on one side of " + zeta_label(zeta));

    GaussFits f;
    f.mu0 = Sy / W;
    const double mean_a = Sa / Wa;
    const double mean_b = (Sy - Sa) / Wb;
    f.mu1 = mean_b;
    f.beta = mean_a - mean_b;
    double ss0 = 0.0, ss1 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double y = data[i].y;
        ss0 += w[i] * (y - f.mu0) * (y - f.mu0);
        const double m = data[i].z > zeta ? mean_a : mean_b;
        ss1 += w[i] * (y - m) * (y - m);
    }
    const double v0 = ss0 / W;
    const double v1 = ss1 / W;
    if (!(v0 > 0.0) || !(v1 > 0.0))
        throw Error(ErrorCode::degenerate_data, "zero residual variance");
    f.sigma0 = std::sqrt(v0);
    f.sigma1 = std::sqrt(v1);
    f.loglik0 = gauss_loglik(W, v0);
    f.loglik1 = gauss_loglik(W, v1);
    return f;
}

GaussFits g_fits(const GaussData& data, double zeta) {
    return g_fits(data, zeta, CaseWeights::unit(data.size()));
}

double g_profile_loglik(const GaussData& data, double zeta, double beta) {
    if (data.empty()) throw Error(ErrorCode::empty_dataset, "empty-dataset");
    const double n = static_cast<double>(data.size());
    double mean = 0.0;
    for (const auto& o : data) mean += o.y - (o.z > zeta ? beta : 0.0);
    mean /= n;
    double ss = 0.0;
    for (const auto& o : data) {
        const double r = o.y - (o.z > zeta ? beta : 0.0) - mean;
        ss += r * r;
    }
    return gauss_loglik(n, ss / n);
}

GaussData read_gauss_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::empty_dataset, "dataset file is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    if (detail::split_csv_line(line) != std::vector<std::string>{"y", "z"})
        throw Error(ErrorCode::malformed_record, "expected header 'y,z'");
    GaussData out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 2)
            throw Error(ErrorCode::malformed_record,
                        "record " + std::to_string(row) + ": expected 2 fields");
        GaussObservation o{detail::parse_number(f[0], row), detail::parse_number(f[1], row)};
        if (!std::isfinite(o.y) || !std::isfinite(o.z))
            throw Error(ErrorCode::malformed_record,
                        "record " + std::to_string(row) + ": nonfinite value");
        out.push_back(o);
        ++row;
    }
    if (out.empty()) throw Error(ErrorCode::empty_dataset, "empty-dataset");
    return out;
}

GaussData read_gauss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    return read_gauss_csv(in);
}

void write_gauss_csv(std::ostream& out, const GaussData& data) {
    out << "y,z\n";
    for (const auto& o : data) out << format_double(o.y) << ',' << format_double(o.z) << '\n';
}

GaussCpModel::GaussCpModel(GaussData data) : data_(std::move(data)) {
    if (data_.empty()) throw Error(ErrorCode::empty_dataset, "empty-dataset");
}

std::shared_ptr<const NullFitState> GaussCpModel::fit_null(const CaseWeights& w) const {
    if (w.size() != data_.size())
        throw Error(ErrorCode::alignment, "weights and data differ in length");
    double W = 0.0, Sy = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) {
        W += w[i];
        Sy += w[i] * data_[i].y;
    }
    auto nf = std::make_shared<GaussNullFit>();
    nf->mu_hat = Sy / W;
    double ss = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i)
        ss += w[i] * (data_[i].y - nf->mu_hat) * (data_[i].y - nf->mu_hat);
    if (!(ss > 0.0)) throw Error(ErrorCode::degenerate_data, "zero residual variance");
    nf->sigma_hat = std::sqrt(ss / W);
    nf->report.loglik = gauss_loglik(W, ss / W);
    nf->report.converged = true;
    return nf;
}

AltEstimate GaussCpModel::fit_alt(double zeta, const CaseWeights& w, const NullFitState&) const {
    const GaussFits f = g_fits(data_, zeta, w);
    AltEstimate est;
    est.beta = Eigen::VectorXd::Constant(1, f.beta);
    est.zeta = zeta;
    est.report.loglik = f.loglik1;
    est.report.converged = true;
    return est;
}

ScoreBlock GaussCpModel::score_beta(const NullFitState& nf, double zeta,
                                    const CaseWeights& w) const {
    const auto* fit = dynamic_cast<const GaussNullFit*>(&nf);
    if (!fit) throw Error(ErrorCode::invalid_argument, "null fit does not come from this model");
    if (w.size() != data_.size())
        throw Error(ErrorCode::alignment, "weights and data differ in length");
    ScoreBlock out;
    out.per_obs = g_efficient_score(data_, zeta, fit->mu_hat, fit->sigma_hat);
    out.mean = Eigen::VectorXd::Zero(1);
    for (std::size_t i = 0; i < data_.size(); ++i) out.mean[0] += w[i] * out.per_obs(i, 0);
    out.mean /= static_cast<double>(data_.size());
    return out;
}

ScoreBlock GaussCpModel::efficient_score(const NullFitState& nf, double zeta) const {
    const auto* fit = dynamic_cast<const GaussNullFit*>(&nf);
    if (!fit) throw Error(ErrorCode::invalid_argument, "null fit does not come from this model");
    ScoreBlock out;
    out.per_obs = g_efficient_score_centered(data_, zeta, fit->mu_hat, fit->sigma_hat);
    out.mean = out.per_obs.colwise().mean().transpose();
    return out;
}

}  // namespace expavg::gauss
