#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mmf {

// Deterministic random stream. The engine (mt19937_64) has standardized
// output; distributions are implemented explicitly so draws are identical
// across standard libraries. Streams split by id, so workers and episodes
// can own independent, reproducible sources.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    // Independent stream derived from this stream's seed and an id.
    RngStream child(std::uint64_t stream_id) const;

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();

    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    std::size_t below(std::size_t n);       // unbiased in [0, n)
    double normal(double mean = 0.0, double stddev = 1.0);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn uniformly from [0, n); order is the sampling order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id);

}  // namespace mmf
