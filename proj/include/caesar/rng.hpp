#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace caesar {

// Deterministic random source. The engine (mt19937_64) is bit-exact across
// platforms, and all distribution transforms are implemented here instead of
// relying on std:: distributions, whose output is implementation-defined.
// Identical seed => identical draw sequence, everywhere.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1), safe as a log/division argument.
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Multiply-shift mapping.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; consumes two draws per call.
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Gamma(shape, 1) by Marsaglia-Tsang, with the u^(1/shape) boost for shape < 1.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("SeededRng::gamma: shape must be positive");
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            return g * std::pow(uniform_open(), 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Dirichlet sample for the given concentration vector. Sampled in log
    // space when any component is below 1 so that tiny concentrations do not
    // underflow the gamma draws to an all-zero vector.
    std::vector<double> dirichlet(const std::vector<double>& concentration) {
        if (concentration.empty())
            throw std::invalid_argument("SeededRng::dirichlet: empty concentration vector");
        const std::size_t k = concentration.size();
        bool tiny = false;
        for (double a : concentration) {
            if (!(a > 0.0)) throw std::invalid_argument("SeededRng::dirichlet: concentrations must be positive");
            if (a < 1.0) tiny = true;
        }
        std::vector<double> out(k);
        if (!tiny) {
            double sum = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                out[i] = gamma(concentration[i]);
                sum += out[i];
            }
            for (double& v : out) v /= sum;
            return out;
        }
        // log G(a) = log G(a + 1) + log(u) / a
        std::vector<double> lg(k);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            lg[i] = std::log(gamma(concentration[i] + 1.0)) +
                    std::log(uniform_open()) / concentration[i];
            mx = std::max(mx, lg[i]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            out[i] = std::exp(lg[i] - mx);
            sum += out[i];
        }
        for (double& v : out) v /= sum;
        return out;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), returned sorted ascending.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("SeededRng::sample_without_replacement: k > n");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    // Derives an independent stream seed from a base seed and up to three
    // tags (e.g. device id, round). splitmix64 finalizer chain.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0) {
        auto fin = [](std::uint64_t x) {
            x += 0x9E3779B97F4A7C15ull;
            x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
            x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
            return x ^ (x >> 31);
        };
        std::uint64_t h = fin(seed);
        h = fin(h ^ a);
        h = fin(h ^ b);
        h = fin(h ^ c);
        return h;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace caesar
