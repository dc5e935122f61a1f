#pragma once

#include <array>
#include <cstdint>

namespace smoothsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The stream is fully determined by (seed, stream id), so results are
/// bit-identical across platforms and standard libraries. Variates are
/// produced by hand-written transforms instead of <random> distributions,
/// whose algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint32_t next_u32();
    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    /// Gamma(shape, 1) by Marsaglia and Tsang.
    double gamma(double shape);
    double student_t(double dof);
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> counter_{};
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derive an independent seed for replicate `index` of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace smoothsde
