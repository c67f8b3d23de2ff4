#include "expavg/core.hpp"

#include "csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace expavg {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::empty_dataset: return "empty-dataset";
    case ErrorCode::malformed_record: return "malformed-record";
    case ErrorCode::degenerate_data: return "degenerate-data";
    case ErrorCode::unidentified_direction: return "unidentified-direction";
    case ErrorCode::singular_variance: return "singular-variance";
    case ErrorCode::optimizer_inconsistency: return "optimizer-inconsistency";
    case ErrorCode::alignment: return "alignment";
    case ErrorCode::bandwidth_failure: return "bandwidth-failure";
    case ErrorCode::insufficient_draws: return "insufficient-draws";
    case ErrorCode::bootstrap_instability: return "bootstrap-instability";
    case ErrorCode::kernel_error: return "kernel-error";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::io_error: return "io-error";
    }
    return "unknown";
}

Dataset validate_dataset(std::span<const Observation> raw) {
    if (raw.empty()) throw Error(ErrorCode::empty_dataset, "dataset has no observations");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto& o = raw[i];
        std::string problem;
        if (!std::isfinite(o.v) || o.v < 0.0) problem = "v must be finite and nonnegative";
        else if (o.delta != 0 && o.delta != 1) problem = "delta must be 0 or 1";
        else if (!std::isfinite(o.z)) problem = "z must be finite";
        if (!problem.empty()) {
            throw Error(ErrorCode::malformed_record,
                        "record " + std::to_string(i) + ": " + problem);
        }
    }
    Dataset ds;
    ds.original_.resize(raw.size());
    std::iota(ds.original_.begin(), ds.original_.end(), std::size_t{0});
    std::stable_sort(ds.original_.begin(), ds.original_.end(),
                     [&](std::size_t a, std::size_t b) { return raw[a].v < raw[b].v; });
    ds.obs_.reserve(raw.size());
    for (auto idx : ds.original_) ds.obs_.push_back(raw[idx]);
    return ds;
}

CaseWeights::CaseWeights(std::vector<double> w) : w_(std::move(w)) {
    double total = 0.0;
    for (double x : w_) {
        if (!(x >= 0.0) || !std::isfinite(x))
            throw Error(ErrorCode::invalid_argument, "case weights must be finite and nonnegative");
        total += x;
    }
    const double n = static_cast<double>(w_.size());
    if (std::abs(total - n) > 1e-10 * std::max(n, 1.0))
        throw Error(ErrorCode::invalid_argument, "case weights must sum to n");
}

CaseWeights CaseWeights::unit(std::size_t n) {
    CaseWeights cw;
    cw.w_.assign(n, 1.0);
    return cw;
}

CaseWeights CaseWeights::standardize(std::span<const double> raw) {
    if (raw.empty()) throw Error(ErrorCode::invalid_argument, "no raw weights");
    const double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / raw.size();
    if (!(mean > 0.0)) throw Error(ErrorCode::invalid_argument, "raw weights must have positive mean");
    std::vector<double> w(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) w[i] = raw[i] / mean;
    return CaseWeights(std::move(w));
}

ZetaPrior::ZetaPrior(std::vector<double> points, std::vector<double> weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.empty() || points_.size() != weights_.size())
        throw Error(ErrorCode::invalid_argument, "prior needs matching nonempty points and weights");
    double total = 0.0;
    for (std::size_t g = 0; g < points_.size(); ++g) {
        if (!std::isfinite(points_[g]))
            throw Error(ErrorCode::invalid_argument, "prior points must be finite");
        if (g > 0 && !(points_[g] > points_[g - 1]))
            throw Error(ErrorCode::invalid_argument, "prior points must be strictly increasing");
        if (!(weights_[g] > 0.0))
            throw Error(ErrorCode::invalid_argument, "prior weights must be positive");
        total += weights_[g];
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw Error(ErrorCode::invalid_argument, "prior weights must sum to one");
}

ZetaPrior ZetaPrior::subset(const std::vector<bool>& keep) const {
    if (keep.size() != points_.size())
        throw Error(ErrorCode::alignment, "subset mask does not match the prior");
    std::vector<double> p, w;
    double total = 0.0;
    for (std::size_t g = 0; g < points_.size(); ++g) {
        if (!keep[g]) continue;
        p.push_back(points_[g]);
        w.push_back(weights_[g]);
        total += weights_[g];
    }
    if (p.empty()) throw Error(ErrorCode::invalid_argument, "subset removes every prior atom");
    for (double& x : w) x /= total;
    return ZetaPrior(std::move(p), std::move(w));
}

ZetaPrior make_uniform_prior(double lo, double hi, std::size_t G) {
    if (!(lo < hi) || G == 0)
        throw Error(ErrorCode::invalid_argument, "uniform prior needs lo < hi and G >= 1");
    std::vector<double> p(G), w(G, 1.0 / static_cast<double>(G));
    const double width = (hi - lo) / static_cast<double>(G);
    for (std::size_t g = 0; g < G; ++g) p[g] = lo + (static_cast<double>(g) + 0.5) * width;
    return ZetaPrior(std::move(p), std::move(w));
}

ZetaPrior point_prior(double zeta0) { return ZetaPrior({zeta0}, {1.0}); }

namespace detail {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, std::size_t row) {
    double x = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, x);
    if (ec != std::errc{} || ptr != last || s.empty())
        throw Error(ErrorCode::malformed_record,
                    "record " + std::to_string(row) + ": cannot parse '" + s + "'");
    return x;
}

}  // namespace detail

using detail::parse_number;
using detail::split_csv_line;

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::empty_dataset, "dataset file is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"v", "delta", "z"})
        throw Error(ErrorCode::malformed_record, "expected header 'v,delta,z'");
    std::vector<Observation> raw;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 3)
            throw Error(ErrorCode::malformed_record,
                        "record " + std::to_string(row) + ": expected 3 fields");
        Observation o;
        o.v = parse_number(f[0], row);
        const double d = parse_number(f[1], row);
        if (d != 0.0 && d != 1.0)
            throw Error(ErrorCode::malformed_record,
                        "record " + std::to_string(row) + ": delta must be 0 or 1");
        o.delta = static_cast<int>(d);
        o.z = parse_number(f[2], row);
        raw.push_back(o);
        ++row;
    }
    return validate_dataset(raw);
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    return read_dataset_csv(in);
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
    out << "v,delta,z\n";
    for (const auto& o : ds.observations())
        out << format_double(o.v) << ',' << o.delta << ',' << format_double(o.z) << '\n';
}

}  // namespace expavg
