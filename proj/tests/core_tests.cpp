#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "dwn/bitvector.hpp"
#include "dwn/errors.hpp"
#include "dwn/rng.hpp"
#include "dwn/thermometer.hpp"

#include "support/oracles.hpp"

using namespace dwn;

TEST_SUITE_BEGIN("core");

TEST_CASE("bitvector keeps padding zero and checks bounds") {
    BitVector v(70);
    v.set(0, true);
    v.set(69, true);
    CHECK(v.get(0));
    CHECK(v.get(69));
    CHECK(v.popcount() == 2);
    CHECK(v.words().size() == 2);
    CHECK((v.words()[1] >> 6) == 0);
    CHECK_THROWS_AS(v.get(70), InputShapeError);
    CHECK_THROWS_AS(v.set(70, true), InputShapeError);

    BitVector w(70);
    w.set(0, true);
    w.set(69, true);
    CHECK(v == w);
    w.set(69, false);
    CHECK_FALSE(v == w);
}

TEST_CASE("rng streams are reproducible and forks are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng base(42);
    Rng f0 = base.fork(0), f1 = base.fork(1);
    CHECK(f0.next_u64() != f1.next_u64());
    CHECK(base.fork(0).next_u64() == Rng(42).fork(0).next_u64());

    Rng r(7);
    for (int i = 0; i < 1000; ++i) CHECK(r.below(13) < 13);

    auto p = Rng(3).permutation(50);
    std::set<std::uint32_t> seen(p.begin(), p.end());
    CHECK(seen.size() == 50);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 49);
    CHECK(p == Rng(3).permutation(50));

    for (int i = 0; i < 200; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("thermometer thresholds are distribution quantiles") {
    // 0..9 at z=1: the median of the ten integers.
    auto codec = fit_distributive({{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}}, 1);
    CHECK(codec.thresholds(0)[0] == doctest::Approx(4.5));

    // Endpoints 0 and 10 at z=3: quartiles by linear interpolation.
    auto q = fit_distributive({{0.0, 10.0}}, 3);
    CHECK(q.thresholds(0)[0] == doctest::Approx(2.5));
    CHECK(q.thresholds(0)[1] == doctest::Approx(5.0));
    CHECK(q.thresholds(0)[2] == doctest::Approx(7.5));

    CHECK(empirical_quantile({1.0, 2.0, 3.0}, 0.0) == doctest::Approx(1.0));
    CHECK(empirical_quantile({1.0, 2.0, 3.0}, 1.0) == doctest::Approx(3.0));
    CHECK(empirical_quantile({1.0, 2.0, 3.0}, 0.25) == doctest::Approx(1.5));
}

TEST_CASE("thermometer encoding is strict and shape-checked") {
    ThermometerCodec codec(2, 2, {1.0, 3.0, 10.0, 20.0});
    BitVector bits = codec.encode(std::vector<double>{3.0, 15.0});
    // 3.0 > 1 but not > 3; 15 > 10 but not > 20.
    CHECK(bits.get(0));
    CHECK_FALSE(bits.get(1));
    CHECK(bits.get(2));
    CHECK_FALSE(bits.get(3));
    CHECK_THROWS_AS(codec.encode(std::vector<double>{1.0}), InputShapeError);
    CHECK_THROWS_AS(ThermometerCodec(1, 2, {5.0, 5.0}), ConfigError);
}

TEST_CASE("duplicate-heavy columns still get strictly increasing thresholds") {
    std::vector<double> col(100, 7.0);
    for (int i = 0; i < 10; ++i) col[i] = double(i);
    auto codec = fit_distributive({col}, 8);
    auto t = codec.thresholds(0);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t[i] > t[i - 1]);
    CHECK(codec.degenerate_features().empty());
}

TEST_CASE("constant columns fall back to an even spread and are reported") {
    auto codec = fit_distributive({{5.0, 5.0, 5.0}}, 3);
    REQUIRE(codec.degenerate_features() == std::vector<std::uint32_t>{0});
    auto t = codec.thresholds(0);
    CHECK(t[0] < t[1]);
    CHECK(t[1] < t[2]);
    CHECK(t[0] == doctest::Approx(5.0 - 1e-6 * 5.0));
    CHECK(t[2] == doctest::Approx(5.0 + 1e-6 * 5.0));

    auto single = fit_distributive({{5.0, 5.0}}, 1);
    CHECK(single.thresholds(0)[0] == doctest::Approx(5.0));
}

TEST_CASE("quantize8 rounds half up and flags degenerate bounds") {
    const std::vector<double> lo{0.0}, hi{255.0};
    CHECK(quantize8(std::vector<double>{0.5}, lo, hi)[0] == 1);
    CHECK(quantize8(std::vector<double>{0.4}, lo, hi)[0] == 0);
    CHECK(quantize8(std::vector<double>{255.0}, lo, hi)[0] == 255);
    CHECK(quantize8(std::vector<double>{999.0}, lo, hi)[0] == 255);
    CHECK(quantize8(std::vector<double>{-5.0}, lo, hi)[0] == 0);

    // Midpoint of [0, 1] scales to 127.5 and rounds up.
    const std::vector<double> zero{0.0}, one{1.0};
    CHECK(quantize8(std::vector<double>{0.5}, zero, one)[0] == 128);

    std::vector<std::uint32_t> degenerate;
    const std::vector<double> three{3.0};
    CHECK(quantize8(std::vector<double>{3.0}, three, three, &degenerate)[0] == 128);
    CHECK(degenerate == std::vector<std::uint32_t>{0});
}

TEST_SUITE_END();
