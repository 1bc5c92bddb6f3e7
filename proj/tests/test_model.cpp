#include <doctest.h>

#include "fd_check.hpp"
#include "ipga/model.hpp"
#include "ipga/serialize.hpp"

#include <cmath>
#include <filesystem>

using namespace ipga;
using G = Graph<double>;

namespace {

Dims tiny_dims() {
    Dims d;
    d.img_h = 16;
    d.img_w = 16;
    d.patch = 8;
    d.d = 16;
    d.n_heads = 2;
    d.n_queries = 4;
    d.enc_layers = 1;
    d.txt_layers = 1;
    d.qf_layers = 1;
    d.max_text_len = 12;
    return d;
}

Image random_image(Rng& rng, int h, int w) {
    Image img(h, w);
    for (auto& e : img.v) e = rng.uniform();
    return img;
}

struct Fixture {
    SurrogateBundle bundle = make_bundle(BundleKind::surrogate, tiny_dims(),
                                         Vocabulary::standard(), 99);
    TypedParams<double> tp = typed_params<double>(bundle.params);
};

} // namespace

TEST_CASE("encode_image is deterministic and shape-correct") {
    Fixture f;
    Rng rng(5);
    Image img = random_image(rng, 16, 16);

    auto run = [&](const Image& im) {
        G g;
        ModelForward<double> mf(g, f.bundle, f.tp);
        auto seq = mf.encode_image(mf.image_leaf(im, false));
        return g.val(seq);
    };
    Mat<double> a = run(img);
    Mat<double> b = run(img);
    CHECK(a.r == f.bundle.dims.num_patches() + 1);
    CHECK(a.c == f.bundle.dims.d);
    CHECK(a.v == b.v);  // bitwise determinism

    // single-pixel change must propagate
    Image img2 = img;
    img2.v[37] = 1.0 - img2.v[37];
    Mat<double> c = run(img2);
    CHECK(a.v != c.v);
}

TEST_CASE("query outputs have shape (N, d) and differ between images") {
    Fixture f;
    Rng rng(6);
    Image a = random_image(rng, 16, 16);
    Image b = random_image(rng, 16, 16);
    auto queries = [&](const Image& im) {
        G g;
        ModelForward<double> mf(g, f.bundle, f.tp);
        auto q = mf.qformer_queries(mf.patch_embeddings(mf.encode_image(mf.image_leaf(im, false))));
        return g.val(q);
    };
    Mat<double> qa = queries(a);
    CHECK(qa.r == f.bundle.dims.n_queries);
    CHECK(qa.c == f.bundle.dims.d);
    CHECK(qa.v != queries(b).v);
}

TEST_CASE("text encoders mask padding and reject bad input") {
    Fixture f;
    G g;
    ModelForward<double> mf(g, f.bundle, f.tp);
    const Vocabulary& v = f.bundle.vocab;

    auto ids = v.encode_for_encoder("red circle top_left");
    auto padded = ids;
    padded.push_back(Vocabulary::kPad);
    padded.push_back(Vocabulary::kPad);

    std::vector<double> enc_plain = g.val(mf.text_encoder_cls(ids)).v;
    std::vector<double> enc_padded = g.val(mf.text_encoder_cls(padded)).v;
    CHECK(enc_plain == enc_padded);
    std::vector<double> qf_plain = g.val(mf.qformer_text_cls(ids)).v;
    std::vector<double> qf_padded = g.val(mf.qformer_text_cls(padded)).v;
    CHECK(qf_plain == qf_padded);

    CHECK_THROWS_AS((void)mf.text_encoder_cls({}), std::invalid_argument);
    std::vector<int> overlong(f.bundle.dims.max_text_len + 1, Vocabulary::kCls);
    CHECK_THROWS_AS((void)mf.text_encoder_cls(overlong), std::invalid_argument);
    // generation targets must be [BOS] ... [EOS]
    auto q = mf.qformer_queries(
        mf.patch_embeddings(mf.encode_image(mf.image_leaf(Image(16, 16), false))));
    CHECK_THROWS_AS((void)mf.itg_nll(q, ids), std::invalid_argument);
}

TEST_CASE("untrained generation NLL is close to log vocab size") {
    // Random init keeps logits near zero, so the next-token distribution is
    // near uniform and the mean NLL per token sits near ln V.
    Fixture f;
    G g;
    ModelForward<double> mf(g, f.bundle, f.tp);
    Rng rng(17);
    Image img = random_image(rng, 16, 16);
    auto q = mf.qformer_queries(mf.patch_embeddings(mf.encode_image(mf.image_leaf(img, false))));
    auto t = f.bundle.vocab.encode_for_generation("red circle top_left blue square bottom_right");
    double nll = g.scalar_val(mf.itg_nll(q, t));
    double lnV = std::log(static_cast<double>(f.bundle.vocab.size()));
    CHECK(nll > 0.0);
    CHECK(nll == doctest::Approx(lnV).epsilon(0.10));
}

TEST_CASE("itm mean logit equals the mean of per-query logits") {
    Fixture f;
    G g;
    ModelForward<double> mf(g, f.bundle, f.tp);
    Rng rng(21);
    Image img = random_image(rng, 16, 16);
    auto patch = mf.patch_embeddings(mf.encode_image(mf.image_leaf(img, false)));
    auto ids = f.bundle.vocab.encode_for_encoder("green triangle bottom_left");
    auto per_query = g.val(mf.itm_query_logits(patch, ids));
    CHECK(per_query.r == f.bundle.dims.n_queries);
    double mean = 0.0;
    for (double e : per_query.v) mean += e;
    mean /= per_query.size();

    G g2;
    ModelForward<double> mf2(g2, f.bundle, f.tp);
    auto patch2 = mf2.patch_embeddings(mf2.encode_image(mf2.image_leaf(img, false)));
    CHECK(g2.scalar_val(mf2.itm_mean_logit(patch2, ids)) == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("generation mask: future text tokens cannot influence earlier predictions") {
    // NLL of the first k tokens must not change when later tokens change.
    Fixture f;
    const Vocabulary& v = f.bundle.vocab;
    Rng rng(31);
    Image img = random_image(rng, 16, 16);

    auto next_logits = [&](const std::string& text, int prefix_len) {
        G g;
        ModelForward<double> mf(g, f.bundle, f.tp);
        auto q =
            mf.qformer_queries(mf.patch_embeddings(mf.encode_image(mf.image_leaf(img, false))));
        auto full = v.encode_for_generation(text);
        std::vector<int> prefix(full.begin(), full.begin() + prefix_len);
        return g.val(mf.itg_next_logits(q, prefix)).v;
    };
    // prefix [BOS] red circle — the continuation differs
    auto a = next_logits("red circle top_left", 3);
    auto b = next_logits("red circle bottom_right", 3);
    CHECK(a == b);
}

TEST_CASE("gradients flow to pixels through every head (finite differences)") {
    Fixture f;
    const Vocabulary& v = f.bundle.vocab;
    auto t_gen = v.encode_for_generation("red circle top_left");
    auto t_cls = v.encode_for_encoder("red circle top_left");

    auto check_head = [&](const char* name, auto&& builder, std::uint64_t seed) {
        Rng rng(seed);
        Image img = random_image(rng, 16, 16);
        std::vector<double> x0 = img.v;
        auto eval = [&](const std::vector<double>& xs) {
            G g;
            ModelForward<double> mf(g, f.bundle, f.tp);
            auto leaf = g.input(Mat<double>(1, static_cast<int>(xs.size()), xs));
            return g.scalar_val(builder(g, mf, leaf));
        };
        G g;
        ModelForward<double> mf(g, f.bundle, f.tp);
        auto leaf = g.input(Mat<double>(1, static_cast<int>(x0.size()), x0));
        auto loss = builder(g, mf, leaf);
        g.backward(loss);
        std::vector<double> grad = g.grad(leaf).v;
        Rng probe(seed ^ 0xabcd);
        auto rep = testutil::fd_compare(eval, x0, grad, probe, 4);
        INFO(name, ": max rel err ", rep.max_rel_err);
        CHECK(rep.max_rel_err < 1e-4);
    };

    using Var = G::Var;
    check_head("sum of query outputs", [&](G& g, ModelForward<double>& mf, Var leaf) {
        auto q = mf.qformer_queries(mf.patch_embeddings(mf.encode_image(leaf)));
        return g.sum_all(g.mul(q, q));
    }, 101);
    check_head("itg nll", [&](G& g, ModelForward<double>& mf, Var leaf) {
        (void)g;
        auto q = mf.qformer_queries(mf.patch_embeddings(mf.encode_image(leaf)));
        return mf.itg_nll(q, t_gen);
    }, 102);
    check_head("itm mean logit", [&](G& g, ModelForward<double>& mf, Var leaf) {
        (void)g;
        auto patch = mf.patch_embeddings(mf.encode_image(leaf));
        return mf.itm_mean_logit(patch, t_cls);
    }, 103);
    check_head("global embedding norm", [&](G& g, ModelForward<double>& mf, Var leaf) {
        auto glob = mf.global_embedding(mf.encode_image(leaf));
        return g.sum_all(g.row_l2norm(glob));
    }, 104);
}

TEST_CASE("bundle serialization round-trips bit-exactly") {
    Fixture f;
    auto path = std::filesystem::temp_directory_path() / "ipga_test_bundle.ipgb";
    save_bundle(f.bundle, path.string(), "cfg123");
    SurrogateBundle loaded = load_bundle(path.string());
    CHECK(loaded.kind == f.bundle.kind);
    CHECK(loaded.dims == f.bundle.dims);
    CHECK(loaded.vocab == f.bundle.vocab);
    REQUIRE(loaded.params.size() == f.bundle.params.size());
    CHECK(loaded.param_checksum() == f.bundle.param_checksum());
    for (const auto& [name, m] : f.bundle.params) {
        CHECK(loaded.param(name).v == m.v);
    }
    auto info = peek_bundle(path.string());
    CHECK(info.config_hash == "cfg123");
    CHECK(info.kind == BundleKind::surrogate);
    std::filesystem::remove(path);

    CHECK_THROWS(load_bundle("/nonexistent/nowhere.ipgb"));
}

TEST_CASE("same seed gives bitwise-identical bundles") {
    Fixture f;
    SurrogateBundle again = make_bundle(BundleKind::surrogate, tiny_dims(),
                                        Vocabulary::standard(), 99);
    CHECK(again.param_checksum() == f.bundle.param_checksum());
    SurrogateBundle other = make_bundle(BundleKind::surrogate, tiny_dims(),
                                        Vocabulary::standard(), 100);
    CHECK(other.param_checksum() != f.bundle.param_checksum());
}
