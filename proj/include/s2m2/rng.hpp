// Seeded RNG with hand-rolled distributions so streams are identical across
// platforms (std::normal_distribution and friends are not portable).

#ifndef S2M2_RNG_HPP
#define S2M2_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace s2m2 {

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    double uniform01() {  // [0, 1) with 53-bit resolution
        return (double)(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 1e-300) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        uint64_t span = (uint64_t)(hi - lo) + 1;
        return lo + (int)(gen_() % span);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = (size_t)(gen_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace s2m2

#endif
