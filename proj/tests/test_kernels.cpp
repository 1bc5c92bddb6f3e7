#include <doctest.h>

#include "ipga/kernels.hpp"
#include "ipga/rng.hpp"

#include <cmath>
#include <cstring>
#include <vector>

using namespace ipga;
namespace k = ipga::kernels;

namespace {

template <class T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<T> v(n);
    for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
    return v;
}

struct BackendGuard {
    ~BackendGuard() { k::reset_backend(); }
};

// Runs fn under both backends and hands results to check.
template <class Fn, class Check>
void compare_backends(Fn fn, Check check) {
    BackendGuard guard;
    if (!k::cpu_supports_avx2()) return;  // scalar-only host: nothing to compare
    k::force_backend(k::Backend::scalar);
    auto a = fn();
    k::force_backend(k::Backend::avx2);
    auto b = fn();
    check(a, b);
}

} // namespace

TEST_CASE("kernel backend dispatch reports a valid backend") {
    auto b = k::active_backend();
    CHECK((b == k::Backend::scalar || b == k::Backend::avx2));
    if (k::cpu_supports_avx2()) {
        BackendGuard guard;
        k::force_backend(k::Backend::avx2);
        CHECK(k::active_backend() == k::Backend::avx2);
        k::force_backend(k::Backend::scalar);
        CHECK(k::active_backend() == k::Backend::scalar);
    }
}

TEST_CASE_TEMPLATE("elementwise kernels match scalar reference bitwise", T, float, double) {
    Rng rng(42);
    // Sizes straddle the vector width, including tails and empty input.
    for (std::size_t n : {0u, 1u, 3u, 7u, 8u, 9u, 31u, 64u, 257u}) {
        auto a = random_vec<T>(rng, n);
        auto b = random_vec<T>(rng, n);
        auto lo = random_vec<T>(rng, n, -1.0, 0.0);
        auto hi = random_vec<T>(rng, n, 0.0, 1.0);
        // Inject exact zeros so sign() hits all three branches.
        if (n > 2) a[n / 2] = T(0);

        auto run = [&](auto op) {
            std::vector<T> out(n, T(-99));
            op(out);
            return out;
        };
        auto bitwise_equal = [](const std::vector<T>& x, const std::vector<T>& y) {
            REQUIRE(x.size() == y.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::memcmp(&x[i], &y[i], sizeof(T)) == 0);
            }
        };

        compare_backends(
            [&] { return run([&](auto& o) { k::add(n, a.data(), b.data(), o.data()); }); },
            bitwise_equal);
        compare_backends(
            [&] { return run([&](auto& o) { k::sub(n, a.data(), b.data(), o.data()); }); },
            bitwise_equal);
        compare_backends(
            [&] { return run([&](auto& o) { k::mul(n, a.data(), b.data(), o.data()); }); },
            bitwise_equal);
        compare_backends(
            [&] { return run([&](auto& o) { k::scale(n, T(1.7), a.data(), o.data()); }); },
            bitwise_equal);
        compare_backends(
            [&] {
                std::vector<T> y = b;
                k::axpy(n, T(-0.3), a.data(), y.data());
                return y;
            },
            bitwise_equal);
        compare_backends(
            [&] {
                return run([&](auto& o) { k::clamp_box(n, a.data(), lo.data(), hi.data(), o.data()); });
            },
            bitwise_equal);
        compare_backends(
            [&] { return run([&](auto& o) { k::sign(n, a.data(), o.data()); }); }, bitwise_equal);
        compare_backends(
            [&] {
                return run([&](auto& o) { k::sign_step(n, b.data(), a.data(), T(0.01), o.data()); });
            },
            bitwise_equal);
    }
}

TEST_CASE_TEMPLATE("reduction kernels agree across backends within tolerance", T, float, double) {
    Rng rng(7);
    const double tol = std::is_same_v<T, float> ? 2e-5 : 1e-12;
    for (std::size_t n : {1u, 5u, 8u, 33u, 100u, 1024u}) {
        auto a = random_vec<T>(rng, n);
        auto b = random_vec<T>(rng, n);
        compare_backends([&] { return std::vector<T>{k::dot(n, a.data(), b.data())}; },
                         [&](auto x, auto y) {
                             CHECK(std::abs(double(x[0]) - double(y[0])) <=
                                   tol * (1.0 + std::abs(double(x[0]))));
                         });
        compare_backends([&] { return std::vector<T>{k::sum(n, a.data())}; },
                         [&](auto x, auto y) {
                             CHECK(std::abs(double(x[0]) - double(y[0])) <=
                                   tol * (1.0 + std::abs(double(x[0]))));
                         });
        compare_backends([&] { return std::vector<T>{k::l1_norm(n, a.data())}; },
                         [&](auto x, auto y) {
                             CHECK(std::abs(double(x[0]) - double(y[0])) <=
                                   tol * (1.0 + std::abs(double(x[0]))));
                         });
    }
}

TEST_CASE("kernel reference values") {
    // dot and l1 on a tiny hand-computed case
    std::vector<double> a = {1.0, -2.0, 3.0};
    std::vector<double> b = {4.0, 5.0, -6.0};
    CHECK(k::dot(3, a.data(), b.data()) == doctest::Approx(-24.0));
    CHECK(k::l1_norm(3, a.data()) == doctest::Approx(6.0));
    CHECK(k::sum(3, a.data()) == doctest::Approx(2.0));

    std::vector<double> g = {-2.5, 0.0, 7.1};
    std::vector<double> s(3);
    k::sign(3, g.data(), s.data());
    CHECK(s[0] == -1.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 1.0);

    std::vector<double> tiny = {1e-30};
    k::sign(1, tiny.data(), s.data());
    CHECK(s[0] == 1.0);
}
