#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "rfcn/tensor.hpp"

namespace rfcn {

/// Seeded generator with hand-rolled value transforms so that identical seeds
/// produce identical streams regardless of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int uniform_int(int lo, int hi);

    /// Standard normal via Box-Muller (pair cached).
    double normal();

    Tensor uniform_tensor(Shape shape, double lo, double hi);
    Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0);

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

    /// Derived stream: one master seed fans out to named substreams so that
    /// adding a consumer never shifts the draws seen by another.
    static std::uint64_t derive_seed(std::uint64_t master, const std::string& label);
    Rng derive(const std::string& label) const { return Rng(derive_seed(seed_, label)); }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 eng_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace rfcn
