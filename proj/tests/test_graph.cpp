#include <doctest.h>

#include "fd_check.hpp"
#include "ipga/graph.hpp"
#include "ipga/rng.hpp"

#include <cmath>
#include <vector>

using namespace ipga;
using G = Graph<double>;
using V = G::Var;

namespace {

Mat<double> random_mat(Rng& rng, int r, int c, double lo = -1.5, double hi = 1.5) {
    Mat<double> m(r, c);
    for (auto& e : m.v) e = rng.uniform(lo, hi);
    return m;
}

// FD-checks d(loss)/d(leaf) for a graph built by `build` over a leaf of the
// given shape.
void check_op(const char* name, int r, int c, const std::function<V(G&, V)>& build,
              std::uint64_t seed = 1, double tol = 5e-7) {
    Rng rng(seed);
    Mat<double> x0 = random_mat(rng, r, c);

    auto eval = [&](const std::vector<double>& xs) {
        G g;
        V leaf = g.input(Mat<double>(r, c, xs));
        return g.scalar_val(build(g, leaf));
    };

    G g;
    V leaf = g.input(x0);
    V loss = build(g, leaf);
    g.backward(loss);
    std::vector<double> grad = g.grad(leaf).v;

    Rng probe(seed ^ 0x9e37);
    auto rep = testutil::fd_compare(eval, x0.v, grad, probe, 5);
    INFO(name, " max rel err ", rep.max_rel_err, " analytic ", rep.worst_analytic, " numeric ",
         rep.worst_numeric);
    CHECK(rep.max_rel_err < tol);
}

} // namespace

TEST_CASE("gradient of sum of squares is 2x") {
    Rng rng(3);
    Mat<double> x0 = random_mat(rng, 2, 5);
    G g;
    V leaf = g.input(x0);
    V loss = g.sum_all(g.mul(leaf, leaf));
    g.backward(loss);
    for (std::size_t i = 0; i < x0.size(); ++i)
        CHECK(g.grad(leaf).v[i] == doctest::Approx(2.0 * x0.v[i]));
}

TEST_CASE("gradient of a constant loss is zero") {
    G g;
    V leaf = g.input(Mat<double>::full(1, 4, 0.3));
    V c = g.constant_scalar(5.0);
    // loss = 5 + 0 * sum(x): depends on x structurally but not numerically
    V loss = g.add(c, g.scale(g.sum_all(leaf), 0.0));
    g.backward(loss);
    for (double e : g.grad(leaf).v) CHECK(e == 0.0);
}

TEST_CASE("finite differences validate every primitive") {
    check_op("matmul", 3, 4, [](G& g, V x) {
        Rng r(11);
        V w = g.constant(random_mat(r, 4, 2));
        return g.sum_all(g.mul(g.matmul(x, w), g.matmul(x, w)));
    });
    check_op("matmul_nt", 3, 4, [](G& g, V x) {
        Rng r(12);
        V w = g.constant(random_mat(r, 5, 4));
        V y = g.matmul_nt(x, w);
        return g.mean_all(g.mul(y, y));
    });
    check_op("both matmul operands", 4, 4, [](G& g, V x) {
        V y = g.matmul(x, x);
        return g.sum_all(g.mul(y, y));
    });
    check_op("softmax_rows", 2, 6, [](G& g, V x) {
        Rng r(13);
        V w = g.constant(random_mat(r, 2, 6));
        return g.sum_all(g.mul(g.softmax_rows(x), w));
    });
    check_op("log_softmax_rows", 2, 6, [](G& g, V x) {
        Rng r(14);
        V w = g.constant(random_mat(r, 2, 6));
        return g.sum_all(g.mul(g.log_softmax_rows(x), w));
    });
    check_op("layer_norm_rows", 3, 8, [](G& g, V x) {
        Rng r(15);
        V gain = g.constant(random_mat(r, 1, 8, 0.5, 1.5));
        V bias = g.constant(random_mat(r, 1, 8));
        V w = g.constant(random_mat(r, 3, 8));
        return g.sum_all(g.mul(g.layer_norm_rows(x, gain, bias, 1e-5), w));
    });
    check_op("gelu", 2, 7, [](G& g, V x) { return g.sum_all(g.gelu(x)); });
    check_op("tanh", 2, 7, [](G& g, V x) { return g.sum_all(g.tanh_(x)); });
    check_op("softplus", 2, 7, [](G& g, V x) { return g.sum_all(g.softplus(x)); });
    check_op("row_l2norm", 3, 5, [](G& g, V x) { return g.sum_all(g.row_l2norm(x)); });
    check_op("div broadcast col", 3, 5, [](G& g, V x) {
        V n = g.add_const(g.row_l2norm(x), 1.0);
        return g.sum_all(g.div(x, n));
    });
    check_op("div broadcast row", 3, 5, [](G& g, V x) {
        Rng r(16);
        V d = g.constant(random_mat(r, 1, 5, 0.5, 2.0));
        return g.sum_all(g.div(x, d));
    });
    check_op("mul broadcast scalar", 3, 5, [](G& g, V x) {
        return g.sum_all(g.mul(x, g.mean_all(x)));
    });
    check_op("transpose/concat/slice", 4, 3, [](G& g, V x) {
        V t = g.transpose(x);                         // 3x4
        V c = g.concat_rows({t, t});                  // 6x4
        V s = g.slice_rows(c, 1, 5);                  // 4x4
        V cc = g.concat_cols({s, s});                 // 4x8
        V sc = g.slice_cols(cc, 2, 6);                // 4x4
        return g.sum_all(g.mul(sc, sc));
    });
    check_op("gather/reshape", 2, 6, [](G& g, V x) {
        std::vector<int> idx = {0, 2, 4, 6, 8, 10, 11, 3};
        V y = g.gather(x, idx, 2, 4);
        V z = g.reshape(y, 4, 2);
        return g.sum_all(g.mul(z, z));
    });
    check_op("rows_gather", 4, 3, [](G& g, V x) {
        std::vector<int> ids = {2, 0, 2, 3, 1};
        V y = g.rows_gather(x, ids);
        return g.sum_all(g.mul(y, y));
    });
    check_op("sqrt", 2, 4, [](G& g, V x) {
        return g.sum_all(g.sqrt_(g.add_const(g.mul(x, x), 0.5)));
    });
    check_op("relu(offset)", 2, 6, [](G& g, V x) {
        // offset keeps coordinates away from the kink
        return g.sum_all(g.relu(g.add_const(x, 0.25)));
    });
    check_op("attn_core q", 5, 8, [](G& g, V x) {
        Rng r(21);
        V k = g.constant(random_mat(r, 6, 8));
        V v = g.constant(random_mat(r, 6, 8));
        V y = g.attn_core(x, k, v, 2, V{});
        return g.sum_all(g.mul(y, y));
    });
    check_op("attn_core kv", 6, 8, [](G& g, V x) {
        Rng r(22);
        V q = g.constant(random_mat(r, 4, 8));
        V y = g.attn_core(q, x, x, 4, V{});
        return g.sum_all(g.mul(y, y));
    });
    check_op("attn_core masked self", 5, 8, [](G& g, V x) {
        Rng r(23);
        Mat<double> mask(5, 5);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) mask.at(i, j) = j <= i ? 0.0 : -1e30;
        V m = g.constant(std::move(mask));
        V w = g.constant(random_mat(r, 5, 8));
        return g.sum_all(g.mul(g.attn_core(x, x, x, 2, m), w));
    });
    check_op("max_all", 1, 7, [](G& g, V x) { return g.max_all(x); });
    check_op("max_colwise", 5, 3, [](G& g, V x) { return g.sum_all(g.max_colwise(x)); });
    check_op("nll_rows", 3, 6, [](G& g, V x) {
        std::vector<int> t = {1, 4, 0};
        return g.nll_rows(g.log_softmax_rows(x), t);
    });
}

TEST_CASE("max_all breaks ties toward the first index") {
    G g;
    Mat<double> m(1, 4);
    m.v = {1.0, 3.0, 3.0, 0.5};
    V leaf = g.input(m);
    V loss = g.max_all(leaf);
    g.backward(loss);
    CHECK(g.grad(leaf).v[1] == 1.0);
    CHECK(g.grad(leaf).v[2] == 0.0);
}

TEST_CASE("grad accumulates when a var fans out") {
    G g;
    V leaf = g.input(Mat<double>::full(1, 3, 2.0));
    V loss = g.add(g.sum_all(leaf), g.sum_all(leaf));
    g.backward(loss);
    for (double e : g.grad(leaf).v) CHECK(e == doctest::Approx(2.0));
}

TEST_CASE("shape errors are rejected") {
    G g;
    V a = g.input(Mat<double>::zeros(2, 3));
    V b = g.input(Mat<double>::zeros(4, 5));
    CHECK_THROWS_AS((void)g.matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS((void)g.add(a, b), std::invalid_argument);
    CHECK_THROWS_AS((void)g.backward(a), std::invalid_argument);
}
