#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "caesar/param_vector.hpp"

namespace caesar {

// Violation of the transfer protocol, e.g. a sign-compressed model arriving
// at a device that has no local model to recover it with.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Hybrid-compressed global model. The floor(ratio * length) elements with the
// smallest magnitudes travel as one sign bit each, everything else at full
// precision, plus the (average, maximum) absolute value of the masked set so
// the receiver can sanity-check its local substitutes.
struct CompressedModel {
    std::uint32_t length = 0;
    float ratio = 0.0f;                       // download compression ratio
    std::vector<std::uint8_t> quantized_mask; // length bits, LSB-first; 1 => sign-only
    std::vector<std::uint8_t> signs;          // one bit per masked element, ascending index; 1 => '+'
    std::vector<float> full_values;           // unmasked elements, ascending index
    float avg_abs = 0.0f;
    float max_abs = 0.0f;

    bool mask_bit(std::size_t i) const {
        return (quantized_mask[i >> 3] >> (i & 7)) & 1u;
    }
    std::size_t masked_count() const;
};

// Top-K sparsified gradient: the max(1, ceil((1 - ratio) * length)) entries
// with the largest magnitudes, stored as parallel (index, value) arrays with
// strictly increasing indices.
struct SparseGradient {
    std::uint32_t length = 0;
    float ratio = 0.0f;                 // upload compression ratio
    std::vector<std::uint32_t> indices;
    std::vector<float> values;
};

// Element-count rules shared by the codecs and the time predictor. Products
// like 0.3 * 10 land a few ulps off an integer, so both round within 1e-9
// of the mathematical value.
std::size_t masked_count_for(std::size_t n, double theta_d);  // floor(theta_d * n)
std::size_t kept_count_for(std::size_t n, double theta_u);    // max(1, ceil((1 - theta_u) * n))

CompressedModel encode_model(const ParamVector& w, double theta_d);

// Reconstructs the dense model. local == nullptr means the device has never
// held a model; that is only legal for a full-precision message. A masked
// element keeps the local value when its sign matches the transmitted bit
// and its magnitude does not exceed max_abs; otherwise it falls back to
// sign * avg_abs. A zero local value matches neither sign.
ParamVector recover_model(const CompressedModel& cm, const ParamVector* local);

SparseGradient encode_gradient(const ParamVector& g, double theta_u);
ParamVector decode_gradient(const SparseGradient& sg);

// Exact on-the-wire size in bits:
//   model:    64 header + n mask + popcount signs + 32*(n - popcount) + 64 summary
//   gradient: 64 header + 64 per entry
std::uint64_t model_payload_bits(const CompressedModel& cm);
std::uint64_t model_payload_bits(std::size_t n, double theta_d);
std::uint64_t gradient_payload_bits(const SparseGradient& sg);
std::uint64_t gradient_payload_bits(std::size_t n, double theta_u);

// Wire format, little-endian bit packing, mask before signs before values.
// Byte count is payload_bits rounded up to whole bytes; trailing pad bits
// are zero.
std::vector<std::uint8_t> to_bytes(const CompressedModel& cm);
CompressedModel model_from_bytes(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> to_bytes(const SparseGradient& sg);
SparseGradient gradient_from_bytes(std::span<const std::uint8_t> bytes);

}  // namespace caesar
