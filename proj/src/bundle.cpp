#include "ipga/bundle.hpp"

#include <cstring>
#include <stdexcept>

namespace ipga {

void Dims::validate() const {
    if (img_h <= 0 || img_w <= 0 || patch <= 0) throw std::invalid_argument("dims: bad image size");
    if (img_h % patch != 0 || img_w % patch != 0)
        throw std::invalid_argument("dims: image size must be a multiple of patch size");
    if (d <= 0 || n_heads <= 0 || d % n_heads != 0)
        throw std::invalid_argument("dims: width must divide into heads");
    if (n_queries <= 0) throw std::invalid_argument("dims: need at least one query token");
    if (enc_layers <= 0 || txt_layers <= 0 || qf_layers <= 0)
        throw std::invalid_argument("dims: layer counts must be positive");
    if (max_text_len < 3) throw std::invalid_argument("dims: max_text_len too small");
}

const char* bundle_kind_name(BundleKind k) {
    switch (k) {
    case BundleKind::surrogate: return "surrogate";
    case BundleKind::victim: return "victim";
    case BundleKind::text_encoder: return "text_encoder";
    }
    return "?";
}

BundleKind bundle_kind_from_name(const std::string& s) {
    if (s == "surrogate") return BundleKind::surrogate;
    if (s == "victim") return BundleKind::victim;
    if (s == "text_encoder") return BundleKind::text_encoder;
    throw std::invalid_argument("unknown bundle kind: " + s);
}

const char* question_type_name(QuestionType t) {
    switch (t) {
    case QuestionType::color: return "color";
    case QuestionType::shape: return "shape";
    case QuestionType::existence: return "existence";
    case QuestionType::position: return "position";
    }
    return "?";
}

QuestionType question_type_from_name(const std::string& s) {
    if (s == "color") return QuestionType::color;
    if (s == "shape") return QuestionType::shape;
    if (s == "existence") return QuestionType::existence;
    if (s == "position") return QuestionType::position;
    throw std::invalid_argument("unknown question type: " + s);
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t SurrogateBundle::param_checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, m] : params) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(m.v.data(), m.v.size() * sizeof(double), h);
    }
    return h;
}

const Mat<double>& SurrogateBundle::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("bundle: missing parameter " + name);
    return it->second;
}

namespace {

constexpr double kInitStd = 0.02;

void gauss(ParamStore& p, const std::string& name, int r, int c, Rng& rng) {
    Mat<double> m(r, c);
    for (auto& e : m.v) e = rng.normal(0.0, kInitStd);
    p.emplace(name, std::move(m));
}

void norm_pair(ParamStore& p, const std::string& prefix, int c) {
    p.emplace(prefix + ".g", Mat<double>::full(1, c, 1.0));
    p.emplace(prefix + ".b", Mat<double>::zeros(1, c));
}

void linear(ParamStore& p, const std::string& prefix, int in, int out, Rng& rng) {
    gauss(p, prefix + ".w", in, out, rng);
    p.emplace(prefix + ".b", Mat<double>::zeros(1, out));
}

void attn_block(ParamStore& p, const std::string& prefix, int d, Rng& rng) {
    linear(p, prefix + ".wq", d, d, rng);
    linear(p, prefix + ".wk", d, d, rng);
    linear(p, prefix + ".wv", d, d, rng);
    linear(p, prefix + ".wo", d, d, rng);
}

void mlp_block(ParamStore& p, const std::string& prefix, int d, int mult, Rng& rng) {
    linear(p, prefix + ".fc1", d, d * mult, rng);
    linear(p, prefix + ".fc2", d * mult, d, rng);
}

void transformer_tower(ParamStore& p, const std::string& prefix, int layers, int d, int mult,
                       Rng& rng) {
    for (int l = 0; l < layers; ++l) {
        std::string lp = prefix + ".l" + std::to_string(l);
        norm_pair(p, lp + ".ln1", d);
        attn_block(p, lp + ".attn", d, rng);
        norm_pair(p, lp + ".ln2", d);
        mlp_block(p, lp + ".mlp", d, mult, rng);
    }
    norm_pair(p, prefix + ".ln_f", d);
}

} // namespace

SurrogateBundle make_bundle(BundleKind kind, const Dims& dims, const Vocabulary& vocab,
                            std::uint64_t seed) {
    dims.validate();
    SurrogateBundle b;
    b.kind = kind;
    b.dims = dims;
    b.vocab = vocab;
    Rng rng(Rng::mix(seed, 0x1b9d2f4a5c6e7081ull));
    ParamStore& p = b.params;
    const int d = dims.d;
    const int V = vocab.size();

    if (kind != BundleKind::text_encoder) {
        // visual encoder g_phi
        linear(p, "enc.patch_proj", dims.patch_dim(), d, rng);
        gauss(p, "enc.cls", 1, d, rng);
        gauss(p, "enc.pos", dims.num_patches() + 1, d, rng);
        transformer_tower(p, "enc", dims.enc_layers, d, dims.mlp_mult, rng);
    }

    // text encoder g_psi
    gauss(p, "txt.emb", V, d, rng);
    gauss(p, "txt.pos", dims.max_text_len, d, rng);
    transformer_tower(p, "txt", dims.txt_layers, d, dims.mlp_mult, rng);

    if (kind != BundleKind::text_encoder) {
        // stage-1 Q-Former: shared self-attention, query-path cross-attention,
        // separate feed-forwards per path, text embeddings, ITM + LM heads.
        gauss(p, "qf.query_tokens", dims.n_queries, d, rng);
        gauss(p, "qf.txt_emb", V, d, rng);
        gauss(p, "qf.txt_pos", dims.max_text_len, d, rng);
        for (int l = 0; l < dims.qf_layers; ++l) {
            std::string lp = "qf.l" + std::to_string(l);
            norm_pair(p, lp + ".ln_self", d);
            attn_block(p, lp + ".self", d, rng);
            norm_pair(p, lp + ".ln_cross", d);
            attn_block(p, lp + ".cross", d, rng);
            norm_pair(p, lp + ".ln_fi", d);
            mlp_block(p, lp + ".ffn_img", d, dims.mlp_mult, rng);
            norm_pair(p, lp + ".ln_ft", d);
            mlp_block(p, lp + ".ffn_txt", d, dims.mlp_mult, rng);
        }
        norm_pair(p, "qf.ln_f_img", d);
        norm_pair(p, "qf.ln_f_txt", d);
        linear(p, "qf.itm_head", d, 1, rng);
        linear(p, "qf.lm_head", d, V, rng);
    }

    if (kind == BundleKind::victim) {
        const QuestionType types[] = {QuestionType::color, QuestionType::shape,
                                      QuestionType::existence, QuestionType::position};
        const int n_answers[] = {8, 3, 2, 9};
        for (int t = 0; t < 4; ++t) {
            std::string hp = std::string("vqa.") + question_type_name(types[t]);
            linear(p, hp + ".fc1", dims.n_queries * d, 64, rng);
            linear(p, hp + ".fc2", 64, n_answers[t], rng);
        }
    }
    return b;
}

} // namespace ipga
