#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "domo/rng.hpp"
#include "domo/vec.hpp"

using namespace domo;

TEST_CASE("vec arithmetic preserves length and values") {
    Vec a{1.0, 2.0, 3.0};
    Vec b{0.5, -1.0, 2.0};
    vec::axpy(2.0, b, a);
    CHECK(a.size() == 3);
    CHECK(a[0] == doctest::Approx(2.0));
    CHECK(a[1] == doctest::Approx(0.0));
    CHECK(a[2] == doctest::Approx(7.0));
    CHECK(vec::dot(b, b) == doctest::Approx(5.25));
    CHECK(vec::squared_norm(b) == doctest::Approx(5.25));
}

TEST_CASE("vec size mismatch is an error") {
    Vec a{1.0, 2.0};
    Vec b{1.0};
    CHECK_THROWS_AS(vec::axpy(1.0, b, a), std::invalid_argument);
}

TEST_CASE("finiteness checks catch NaN and Inf") {
    Vec a{1.0, std::nan(""), 3.0};
    CHECK_FALSE(vec::all_finite(a));
    CHECK_THROWS(vec::require_finite(a, "test"));
    Vec b{1.0, std::numeric_limits<double>::infinity()};
    CHECK_FALSE(vec::all_finite(b));
}

TEST_CASE("streams are reproducible and stream keys separate") {
    RngStream a(42, StreamKind::Batch, 3, 7);
    RngStream b(42, StreamKind::Batch, 3, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(42, StreamKind::Batch, 3, 8);  // different round
    RngStream d(42, StreamKind::Batch, 4, 7);  // different client
    RngStream e(43, StreamKind::Batch, 3, 7);  // different seed
    RngStream f(42, StreamKind::Partition, 3, 7);
    RngStream base(42, StreamKind::Batch, 3, 7);
    const std::uint64_t v = base.next_u64();
    CHECK(c.next_u64() != v);
    CHECK(d.next_u64() != v);
    CHECK(e.next_u64() != v);
    CHECK(f.next_u64() != v);
}

TEST_CASE("below is unbiased within 3 sigma over 1e5 draws") {
    RngStream rng(123, StreamKind::Batch);
    const int n = 7;
    const int draws = 100000;
    std::map<int, int> counts;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<int>(rng.below(n))];
    const double expect = static_cast<double>(draws) / n;
    const double sigma = std::sqrt(expect * (1.0 - 1.0 / n));
    for (int v = 0; v < n; ++v) {
        CHECK(std::abs(counts[v] - expect) < 3.0 * sigma);
    }
}

TEST_CASE("uniform01 stays in [0, 1) and normal has sane moments") {
    RngStream rng(9, StreamKind::Init);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("below rejects zero") {
    RngStream rng(1, StreamKind::Batch);
    CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}
