// Command-line front end: simulate | test | table1 | limits.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include "expavg/harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace expavg;

int exit_code(ErrorCode code) {
    switch (code) {
    case ErrorCode::config_error:
    case ErrorCode::invalid_argument:
        return 2;
    case ErrorCode::io_error:
    case ErrorCode::empty_dataset:
    case ErrorCode::malformed_record:
    case ErrorCode::degenerate_data:
    case ErrorCode::unidentified_direction:
    case ErrorCode::alignment:
        return 3;
    default:
        return 4;
    }
}

/// Writes to --out when given, stdout otherwise.
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
    if (path.empty()) {
        fn(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    fn(out);
    if (!out) throw Error(ErrorCode::io_error, "failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exponential-average tests under loss of identifiability"};
    app.require_subcommand(1);

    std::string config_path, out_path, dataset_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON configuration")->required();
        sub->add_option("--out", out_path, "output path (default: stdout)");
        sub->add_option("--seed", seed, "overrides the configured seed");
        sub->add_option("--workers", workers, "overrides max_workers")
            ->check(CLI::PositiveNumber);
    };
    auto* simulate = app.add_subcommand("simulate", "write a simulated dataset as CSV");
    add_common(simulate);
    auto* test = app.add_subcommand("test", "run the tests on one dataset, JSON report");
    add_common(test);
    test->add_option("--data", dataset_path, "dataset CSV")->required();
    auto* table1 = app.add_subcommand("table1", "Monte Carlo size/power table as CSV");
    add_common(table1);
    auto* limits = app.add_subcommand("limits", "limit-law critical values as CSV");
    add_common(limits);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (limits->parsed()) {
            auto cfg = harness::load_limit_config(config_path);
            if (seed) cfg.seed = *seed;
            if (workers) cfg.max_workers = *workers;
            const auto rows = harness::run_limit_table(cfg);
            emit(out_path, [&](std::ostream& os) { write_limit_csv(os, rows); });
            return 0;
        }
        auto cfg = harness::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (workers) cfg.max_workers = *workers;
        if (simulate->parsed()) {
            emit(out_path, [&](std::ostream& os) { harness::write_simulated(os, cfg); });
        } else if (test->parsed()) {
            const auto report = harness::run_single_test(dataset_path, cfg);
            emit(out_path, [&](std::ostream& os) { os << report.dump(2) << '\n'; });
        } else if (table1->parsed()) {
            const auto res = harness::run_table1(cfg);
            if (res.failed_replicates > 0)
                std::cerr << "warning: " << res.failed_replicates
                          << " replicate(s) failed and were excluded\n";
            emit(out_path, [&](std::ostream& os) { harness::write_table1_csv(os, res, cfg); });
        }
    } catch (const Error& e) {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
