#ifndef DREAMPAST_RNG_HPP
#define DREAMPAST_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace dreampast {

// Deterministic splitmix64 stream with hierarchical forking.
//
// Every stage of the pipeline derives its own child stream from
// (seed, stage tag, indices), so results do not depend on execution
// order, thread count, or whether a run was resumed. std:: engines and
// distributions are deliberately avoided: their sequences are not
// pinned across standard library implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)), origin_(state_) {}

    // independent child stream; same (parent, tag, a, b) -> same stream
    Rng fork(std::string_view tag, uint64_t a = 0, uint64_t b = 0) const;

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform on [0,1) with 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer on [0,n), n >= 1 (Lemire reduction, no modulo bias to speak of)
    int uniform_int(int n);

    // standard normal via Box-Muller (no cached spare: keeps streams positionless)
    double normal();

    void fill_normal(double* out, size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(int(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static uint64_t mix(uint64_t z);
    uint64_t state_;   // advances with every draw
    uint64_t origin_;  // fixed at construction; forks derive from this
};

}  // namespace dreampast

#endif
