#include "caesar/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace caesar {

double mse(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("mse: length mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

namespace {

std::vector<std::size_t> select_by_magnitude(const ParamVector& v, std::size_t k,
                                             bool smallest) {
    if (k > v.size())
        throw std::invalid_argument("magnitude selection: k exceeds vector length");
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (smallest) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const float ma = std::fabs(v[a]);
            const float mb = std::fabs(v[b]);
            return ma != mb ? ma < mb : a < b;
        });
    } else {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const float ma = std::fabs(v[a]);
            const float mb = std::fabs(v[b]);
            return ma != mb ? ma > mb : a < b;
        });
    }
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

std::vector<std::size_t> k_smallest_abs_indices(const ParamVector& v, std::size_t k) {
    return select_by_magnitude(v, k, true);
}

std::vector<std::size_t> k_largest_abs_indices(const ParamVector& v, std::size_t k) {
    return select_by_magnitude(v, k, false);
}

}  // namespace caesar
