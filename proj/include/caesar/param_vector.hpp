#pragma once

#include <cstddef>
#include <vector>

namespace caesar {

// Flat model/gradient representation: every model in the system is a fixed
// ordering of 32-bit parameters, so vectors from different devices line up
// element by element.
using ParamVector = std::vector<float>;

// Mean squared difference (1/n) * sum((a_k - b_k)^2), accumulated in double.
double mse(const ParamVector& a, const ParamVector& b);

// Indices of the k elements with smallest |v|, ties won by the lower index.
// Result sorted ascending.
std::vector<std::size_t> k_smallest_abs_indices(const ParamVector& v, std::size_t k);

// Indices of the k elements with largest |v|, ties won by the lower index.
// Result sorted ascending.
std::vector<std::size_t> k_largest_abs_indices(const ParamVector& v, std::size_t k);

}  // namespace caesar
