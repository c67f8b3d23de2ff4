#include "expavg/isotonic.hpp"

#include "expavg/core.hpp"

#include <limits>

namespace expavg {

namespace {

struct Block {
    double numer;
    double denom;
    std::size_t count;

    double value() const {
        if (denom > 0.0) return numer / denom;
        if (numer > 0.0) return std::numeric_limits<double>::infinity();
        if (numer < 0.0) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }
};

}  // namespace

std::vector<double> pava_cumsum(std::span<const double> numer, std::span<const double> denom) {
    if (numer.size() != denom.size())
        throw Error(ErrorCode::alignment, "pava: numerator and weight lengths differ");
    std::vector<Block> stack;
    stack.reserve(numer.size());
    for (std::size_t j = 0; j < numer.size(); ++j) {
        if (denom[j] < 0.0) throw Error(ErrorCode::invalid_argument, "pava: negative weight");
        stack.push_back({numer[j], denom[j], 1});
        while (stack.size() > 1 && stack[stack.size() - 2].value() > stack.back().value()) {
            Block top = stack.back();
            stack.pop_back();
            auto& prev = stack.back();
            prev.numer += top.numer;
            prev.denom += top.denom;
            prev.count += top.count;
        }
    }
    std::vector<double> out;
    out.reserve(numer.size());
    for (const auto& b : stack) out.insert(out.end(), b.count, b.value());
    return out;
}

std::vector<double> pava(std::span<const double> y, std::span<const double> w) {
    if (y.size() != w.size()) throw Error(ErrorCode::alignment, "pava: y and w lengths differ");
    std::vector<double> numer(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) numer[j] = w[j] * y[j];
    return pava_cumsum(numer, w);
}

}  // namespace expavg
