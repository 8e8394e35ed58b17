#pragma once

#include <cmath>
#include <cstdint>

namespace roughskew::numerics {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t x) {
    return splitmix64(x);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace detail

// xoshiro256++ stream keyed by (seed, stream_id).  Equal keys give bit-equal
// sequences; distinct stream_ids give statistically independent streams.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id) {
        std::uint64_t init = seed;
        std::uint64_t salt = stream_id;
        init ^= detail::splitmix64(salt);
        s_[0] = detail::splitmix64(init);
        s_[1] = detail::splitmix64(init);
        s_[2] = detail::splitmix64(init);
        s_[3] = detail::splitmix64(init);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    // Uniform on (0,1): 53 mantissa bits, never exactly 0 or 1.
    double uniform01() {
        const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    // Marsaglia polar method with one-sample cache.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    // Deterministic child stream i, independent of this stream's draw state.
    RngStream split(std::uint64_t i) const {
        std::uint64_t h = stream_id_;
        h ^= detail::splitmix64(h) + 0x9E3779B97F4A7C15ULL * (i + 1);
        std::uint64_t salt = i;
        return RngStream(seed_, h ^ detail::splitmix64(salt));
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace roughskew::numerics
