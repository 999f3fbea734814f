#include "caesar/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace caesar {
namespace {

constexpr double count_snap = 1e-9;

struct BitWriter {
    std::vector<std::uint8_t> bytes;
    std::size_t bit_pos = 0;

    void put_bit(bool b) {
        if (bit_pos % 8 == 0) bytes.push_back(0);
        if (b) bytes.back() |= static_cast<std::uint8_t>(1u << (bit_pos % 8));
        ++bit_pos;
    }
    void put_u32(std::uint32_t v) {
        for (int i = 0; i < 32; ++i) put_bit((v >> i) & 1u);
    }
    void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
};

struct BitReader {
    std::span<const std::uint8_t> bytes;
    std::size_t bit_pos = 0;

    bool get_bit() {
        if (bit_pos >= bytes.size() * 8)
            throw ProtocolError("payload truncated");
        bool b = (bytes[bit_pos >> 3] >> (bit_pos & 7)) & 1u;
        ++bit_pos;
        return b;
    }
    std::uint32_t get_u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 32; ++i)
            if (get_bit()) v |= 1u << i;
        return v;
    }
    float get_f32() { return std::bit_cast<float>(get_u32()); }
};

void check_ratio(double r, const char* what) {
    if (!(r >= 0.0 && r < 1.0))
        throw std::invalid_argument(std::string(what) + " must lie in [0, 1)");
}

std::size_t expected_model_bytes(std::size_t n, std::size_t popcount) {
    std::uint64_t bits = 64 + n + popcount + 32ull * (n - popcount) + 64;
    return static_cast<std::size_t>((bits + 7) / 8);
}

}  // namespace

std::size_t CompressedModel::masked_count() const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < length; ++i)
        if (mask_bit(i)) ++c;
    return c;
}

std::size_t masked_count_for(std::size_t n, double theta_d) {
    check_ratio(theta_d, "theta_d");
    return static_cast<std::size_t>(std::floor(theta_d * static_cast<double>(n) + count_snap));
}

std::size_t kept_count_for(std::size_t n, double theta_u) {
    check_ratio(theta_u, "theta_u");
    if (n == 0) return 0;
    double raw = std::ceil((1.0 - theta_u) * static_cast<double>(n) - count_snap);
    auto k = static_cast<std::size_t>(std::max(raw, 1.0));
    return std::min(k, n);
}

CompressedModel encode_model(const ParamVector& w, double theta_d) {
    const std::size_t n = w.size();
    const std::size_t k_q = masked_count_for(n, theta_d);

    CompressedModel cm;
    cm.length = static_cast<std::uint32_t>(n);
    cm.ratio = static_cast<float>(theta_d);
    cm.quantized_mask.assign((n + 7) / 8, 0);

    auto masked = k_smallest_abs_indices(w, k_q);
    for (std::size_t i : masked)
        cm.quantized_mask[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));

    cm.signs.assign((k_q + 7) / 8, 0);
    double sum_abs = 0.0;
    double max_abs = 0.0;
    for (std::size_t j = 0; j < masked.size(); ++j) {
        const float v = w[masked[j]];
        if (v >= 0.0f) cm.signs[j >> 3] |= static_cast<std::uint8_t>(1u << (j & 7));
        sum_abs += std::abs(static_cast<double>(v));
        max_abs = std::max(max_abs, std::abs(static_cast<double>(v)));
    }
    cm.full_values.reserve(n - k_q);
    for (std::size_t i = 0; i < n; ++i)
        if (!cm.mask_bit(i)) cm.full_values.push_back(w[i]);

    if (k_q > 0) {
        cm.avg_abs = static_cast<float>(sum_abs / static_cast<double>(k_q));
        cm.max_abs = static_cast<float>(max_abs);
    }
    return cm;
}

ParamVector recover_model(const CompressedModel& cm, const ParamVector* local) {
    const std::size_t n = cm.length;
    const std::size_t k_q = cm.masked_count();
    if (local == nullptr) {
        if (cm.ratio != 0.0f || k_q != 0)
            throw ProtocolError("sign-compressed model sent to a device with no local model");
    } else if (local->size() != n) {
        throw std::invalid_argument("local model length mismatch");
    }

    ParamVector w(n);
    std::size_t sign_idx = 0;
    std::size_t full_idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!cm.mask_bit(i)) {
            w[i] = cm.full_values[full_idx++];
            continue;
        }
        const bool positive = (cm.signs[sign_idx >> 3] >> (sign_idx & 7)) & 1u;
        ++sign_idx;
        const float c = (*local)[i];
        const bool sign_match = positive ? (c > 0.0f) : (c < 0.0f);
        if (sign_match && std::abs(c) <= cm.max_abs)
            w[i] = c;
        else
            w[i] = positive ? cm.avg_abs : -cm.avg_abs;
    }
    return w;
}

SparseGradient encode_gradient(const ParamVector& g, double theta_u) {
    const std::size_t n = g.size();
    const std::size_t k = kept_count_for(n, theta_u);

    SparseGradient sg;
    sg.length = static_cast<std::uint32_t>(n);
    sg.ratio = static_cast<float>(theta_u);
    auto kept = k_largest_abs_indices(g, k);
    sg.indices.reserve(k);
    sg.values.reserve(k);
    for (std::size_t i : kept) {
        sg.indices.push_back(static_cast<std::uint32_t>(i));
        sg.values.push_back(g[i]);
    }
    return sg;
}

ParamVector decode_gradient(const SparseGradient& sg) {
    ParamVector g(sg.length, 0.0f);
    for (std::size_t j = 0; j < sg.indices.size(); ++j) {
        if (sg.indices[j] >= sg.length)
            throw ProtocolError("gradient index out of range");
        g[sg.indices[j]] = sg.values[j];
    }
    return g;
}

std::uint64_t model_payload_bits(const CompressedModel& cm) {
    const std::uint64_t n = cm.length;
    const std::uint64_t k_q = cm.masked_count();
    return 64 + n + k_q + 32 * (n - k_q) + 64;
}

std::uint64_t model_payload_bits(std::size_t n, double theta_d) {
    const std::uint64_t k_q = masked_count_for(n, theta_d);
    return 64 + n + k_q + 32 * (static_cast<std::uint64_t>(n) - k_q) + 64;
}

std::uint64_t gradient_payload_bits(const SparseGradient& sg) {
    return 64 + 64ull * sg.indices.size();
}

std::uint64_t gradient_payload_bits(std::size_t n, double theta_u) {
    return 64 + 64ull * kept_count_for(n, theta_u);
}

std::vector<std::uint8_t> to_bytes(const CompressedModel& cm) {
    const std::size_t n = cm.length;
    const std::size_t k_q = cm.masked_count();

    BitWriter bw;
    bw.bytes.reserve(expected_model_bytes(n, k_q));
    bw.put_u32(cm.length);
    bw.put_f32(cm.ratio);
    for (std::size_t i = 0; i < n; ++i) bw.put_bit(cm.mask_bit(i));
    for (std::size_t j = 0; j < k_q; ++j)
        bw.put_bit((cm.signs[j >> 3] >> (j & 7)) & 1u);
    for (float v : cm.full_values) bw.put_f32(v);
    bw.put_f32(cm.avg_abs);
    bw.put_f32(cm.max_abs);
    return std::move(bw.bytes);
}

CompressedModel model_from_bytes(std::span<const std::uint8_t> bytes) {
    BitReader br{bytes};
    CompressedModel cm;
    cm.length = br.get_u32();
    cm.ratio = br.get_f32();
    if (!(cm.ratio >= 0.0f && cm.ratio < 1.0f))
        throw ProtocolError("compression ratio out of range");

    const std::size_t n = cm.length;
    cm.quantized_mask.assign((n + 7) / 8, 0);
    std::size_t k_q = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (br.get_bit()) {
            cm.quantized_mask[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
            ++k_q;
        }
    }
    if (bytes.size() != expected_model_bytes(n, k_q))
        throw ProtocolError("model payload size mismatch");

    cm.signs.assign((k_q + 7) / 8, 0);
    for (std::size_t j = 0; j < k_q; ++j)
        if (br.get_bit()) cm.signs[j >> 3] |= static_cast<std::uint8_t>(1u << (j & 7));
    cm.full_values.resize(n - k_q);
    for (auto& v : cm.full_values) v = br.get_f32();
    cm.avg_abs = br.get_f32();
    cm.max_abs = br.get_f32();
    return cm;
}

std::vector<std::uint8_t> to_bytes(const SparseGradient& sg) {
    BitWriter bw;
    bw.bytes.reserve(8 + 8 * sg.indices.size());
    bw.put_u32(sg.length);
    bw.put_u32(static_cast<std::uint32_t>(sg.indices.size()));
    for (std::size_t j = 0; j < sg.indices.size(); ++j) {
        bw.put_u32(sg.indices[j]);
        bw.put_f32(sg.values[j]);
    }
    return std::move(bw.bytes);
}

SparseGradient gradient_from_bytes(std::span<const std::uint8_t> bytes) {
    BitReader br{bytes};
    SparseGradient sg;
    sg.length = br.get_u32();
    const std::uint32_t count = br.get_u32();
    if (bytes.size() != 8 + 8ull * count)
        throw ProtocolError("gradient payload size mismatch");
    sg.indices.resize(count);
    sg.values.resize(count);
    std::uint32_t prev = 0;
    for (std::uint32_t j = 0; j < count; ++j) {
        sg.indices[j] = br.get_u32();
        sg.values[j] = br.get_f32();
        if (sg.indices[j] >= sg.length || (j > 0 && sg.indices[j] <= prev))
            throw ProtocolError("gradient indices must be strictly increasing and in range");
        prev = sg.indices[j];
    }
    return sg;
}

}  // namespace caesar
