#include "mmf/rng.hpp"

#include <cmath>

#include "mmf/error.hpp"

namespace mmf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
    return splitmix64(splitmix64(seed) ^ splitmix64(stream_id * 0x9e3779b97f4a7c15ULL + 1));
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

RngStream RngStream::child(std::uint64_t stream_id) const {
    return RngStream(mix_seed(seed_, stream_id));
}

std::uint64_t RngStream::next_u64() {
    return engine_();
}

double RngStream::uniform() {
    // 53 high bits give a double in [0, 1).
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    require(lo < hi, ErrorCode::invalid_argument, "uniform: empty range");
    return lo + (hi - lo) * uniform();
}

std::size_t RngStream::below(std::size_t n) {
    require(n > 0, ErrorCode::invalid_argument, "below: n must be positive");
    std::uint64_t bound = static_cast<std::uint64_t>(n);
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw;
    do {
        draw = next_u64();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

double RngStream::normal(double mean, double stddev) {
    // Box-Muller; always consumes two uniforms, so the stream advances the
    // same way regardless of which component a caller keeps.
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    double mag = std::sqrt(-2.0 * std::log(u1));
    double z = mag * std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stddev * z;
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n, std::size_t k) {
    require(k <= n, ErrorCode::invalid_argument, "sample_without_replacement: k exceeds n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + below(n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace mmf
