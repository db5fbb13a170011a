#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "cglo/tensor.hpp"

namespace cglo::testing {

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(Real)) == 0;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, Real lo = -1.0, Real hi = 1.0) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> u(lo, hi);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("cglo_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace cglo::testing
