#ifndef JAT_TESTS_TEST_UTIL_HPP_
#define JAT_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "jat/graph.hpp"
#include "jat/tensor.hpp"
#include "jat/util.hpp"

namespace jat::testutil {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.gauss() * scale;
    return t;
}

// relative agreement with an absolute floor, the audit comparison used
// throughout: |a-b| <= tol * max(|a|, |b|, floor)
inline bool close_rel(double a, double b, double tol, double floor = 1e-6) {
    return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Tensor<double>& a, const Tensor<double>& b, double floor = 1e-6) {
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

// unique scratch directory under the build tree
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("jat_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string fixture_path(const std::string& rel) {
#ifdef JAT_FIXTURE_DIR
    return std::string(JAT_FIXTURE_DIR) + "/" + rel;
#else
    return "tests/fixtures/" + rel;
#endif
}

}  // namespace jat::testutil

#endif  // JAT_TESTS_TEST_UTIL_HPP_
