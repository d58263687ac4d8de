#include "util/rng.hpp"

#include <cmath>

namespace dreampast {

uint64_t Rng::mix(uint64_t z) {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Rng Rng::fork(std::string_view tag, uint64_t a, uint64_t b) const {
    // derive from the construction-time state so a fork never depends on
    // how many draws the parent has made
    uint64_t h = origin_;
    for (char c : tag) h = mix(h ^ uint64_t(uint8_t(c)));
    h = mix(h ^ a);
    h = mix(h ^ b);
    Rng child(0);
    child.state_ = h;
    child.origin_ = h;
    return child;
}

int Rng::uniform_int(int n) {
    // Lemire's multiply-shift with rejection, exact and fast
    uint64_t range = uint64_t(n);
    uint64_t x = next_u64();
    __uint128_t m = __uint128_t(x) * range;
    uint64_t lo = uint64_t(m);
    if (lo < range) {
        uint64_t threshold = (uint64_t(0) - range) % range;
        while (lo < threshold) {
            x = next_u64();
            m = __uint128_t(x) * range;
            lo = uint64_t(m);
        }
    }
    return int(uint64_t(m >> 64));
}

double Rng::normal() {
    // u1 in (0,1] so the log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_normal(double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = normal();
}

}  // namespace dreampast
