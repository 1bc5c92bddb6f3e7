#include "ipga/pretrain.hpp"

#include "ipga/model.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

namespace ipga {

namespace {

// Adam with bias correction; state keyed by parameter name.
class Adam {
public:
    Adam(double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(ParamStore& params, const std::map<std::string, Mat<double>>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (const auto& [name, g] : grads) {
            Mat<double>& p = params.at(name);
            Slot& s = slots_[name];
            if (s.m.size() != g.size()) {
                s.m = Mat<double>::zeros(g.r, g.c);
                s.v = Mat<double>::zeros(g.r, g.c);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                s.m.v[i] = b1_ * s.m.v[i] + (1.0 - b1_) * g.v[i];
                s.v.v[i] = b2_ * s.v.v[i] + (1.0 - b2_) * g.v[i] * g.v[i];
                double mhat = s.m.v[i] / bc1;
                double vhat = s.v.v[i] / bc2;
                p.v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    struct Slot {
        Mat<double> m, v;
    };
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::map<std::string, Slot> slots_;
};

using BatchLossFn = std::function<typename Graph<double>::Var(
    Graph<double>&, ModelForward<double>&, const std::vector<int>&)>;

// Generic epoch loop: shuffles the corpus, builds one graph per batch,
// backpropagates, and applies Adam to the parameters selected by `filter`.
void train_epochs(SurrogateBundle& b, const std::function<bool(const std::string&)>& filter,
                  int n_items, int epochs, int batch, double lr, Rng& rng,
                  const BatchLossFn& batch_loss, bool verbose, const char* tag) {
    Adam adam(lr);
    std::vector<int> order(n_items);
    for (int i = 0; i < n_items; ++i) order[i] = i;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int i = n_items - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
        double epoch_loss = 0.0;
        int batches = 0;
        for (int start = 0; start + batch <= n_items; start += batch) {
            std::vector<int> idx(order.begin() + start, order.begin() + start + batch);
            TypedParams<double> tp = typed_params<double>(b.params);
            Graph<double> g;
            ModelForward<double> mf(g, b, tp, filter);
            auto loss = batch_loss(g, mf, idx);
            epoch_loss += g.scalar_val(loss);
            ++batches;
            g.backward(loss);
            std::map<std::string, Mat<double>> grads;
            for (const auto& [name, var] : mf.bound_params()) {
                if (g.needs_grad(var)) grads.emplace(name, g.grad(var));
            }
            adam.step(b.params, grads);
        }
        if (verbose)
            std::fprintf(stderr, "[pretrain] %s epoch %d/%d loss %.4f\n", tag, epoch + 1, epochs,
                         epoch_loss / std::max(batches, 1));
    }
}

std::vector<int> iota_targets(int n) {
    std::vector<int> t(n);
    for (int i = 0; i < n; ++i) t[i] = i;
    return t;
}

// In-batch InfoNCE over a (B, B) similarity matrix, both directions.
typename Graph<double>::Var infonce(Graph<double>& g, typename Graph<double>::Var sims) {
    int b = g.val(sims).r;
    auto targets = iota_targets(b);
    auto i2t = g.nll_rows(g.log_softmax_rows(sims), targets);
    auto t2i = g.nll_rows(g.log_softmax_rows(g.transpose(sims)), targets);
    return g.scale(g.add(i2t, t2i), 0.5);
}

typename Graph<double>::Var normalize_rows(Graph<double>& g, typename Graph<double>::Var m) {
    return g.div(m, g.row_l2norm(m));
}

void check_corpus(const CaptionCorpus& corpus, const PretrainConfig& cfg) {
    if (static_cast<int>(corpus.size()) < cfg.batch)
        throw std::invalid_argument("pretrain: corpus smaller than batch size");
    if (cfg.batch < 2)
        throw std::invalid_argument("pretrain: in-batch objectives need batch >= 2");
}

// Phase 1: CLIP-style contrastive alignment of g_phi and g_psi.
void train_encoders(SurrogateBundle& b, const CaptionCorpus& corpus, const PretrainConfig& cfg,
                    Rng& rng) {
    auto filter = [](const std::string& n) {
        return n.rfind("enc.", 0) == 0 || n.rfind("txt.", 0) == 0;
    };
    const double inv_tau = 1.0 / cfg.temperature;
    std::vector<std::vector<int>> enc_ids;
    for (const auto& [img, cap] : corpus) enc_ids.push_back(b.vocab.encode_for_encoder(cap));

    train_epochs(
        b, filter, static_cast<int>(corpus.size()), cfg.clip_epochs, cfg.batch, cfg.lr, rng,
        [&](Graph<double>& g, ModelForward<double>& mf, const std::vector<int>& idx) {
            std::vector<typename Graph<double>::Var> img_rows, txt_rows;
            for (int i : idx) {
                auto leaf = mf.image_leaf(corpus[i].first, false);
                img_rows.push_back(mf.global_embedding(mf.encode_image(leaf)));
                txt_rows.push_back(mf.text_encoder_cls(enc_ids[i]));
            }
            auto in = normalize_rows(g, g.concat_rows(img_rows));
            auto tn = normalize_rows(g, g.concat_rows(txt_rows));
            auto sims = g.scale(g.matmul_nt(in, tn), inv_tau);
            return infonce(g, sims);
        },
        cfg.verbose, "clip");
}

// Phase 2: Q-Former objectives with the encoder frozen; patch embeddings
// are precomputed once per corpus image.
void train_qformer(SurrogateBundle& b, const CaptionCorpus& corpus, const PretrainConfig& cfg,
                   Rng& rng) {
    auto filter = [](const std::string& n) { return n.rfind("qf.", 0) == 0; };
    const double inv_tau = 1.0 / cfg.temperature;

    std::vector<Mat<double>> patch_cache;
    std::vector<std::vector<int>> enc_ids, gen_ids;
    patch_cache.reserve(corpus.size());
    for (const auto& [img, cap] : corpus) {
        patch_cache.push_back(patch_embeddings_value(b, img));
        enc_ids.push_back(b.vocab.encode_for_encoder(cap));
        gen_ids.push_back(b.vocab.encode_for_generation(cap));
    }

    train_epochs(
        b, filter, static_cast<int>(corpus.size()), cfg.qf_epochs, cfg.batch, cfg.lr, rng,
        [&](Graph<double>& g, ModelForward<double>& mf, const std::vector<int>& idx) {
            using Var = typename Graph<double>::Var;
            const int bsz = static_cast<int>(idx.size());
            std::vector<Var> queries(bsz), patch(bsz);
            std::vector<Var> txt_rows;
            for (int j = 0; j < bsz; ++j) {
                patch[j] = g.constant(patch_cache[idx[j]]);
                queries[j] = mf.qformer_queries(patch[j]);
                txt_rows.push_back(mf.qformer_text_cls(enc_ids[idx[j]]));
            }
            auto tn = normalize_rows(g, g.concat_rows(txt_rows));

            // ITC: best-query similarity against every caption in the batch.
            std::vector<Var> sim_rows;
            for (int j = 0; j < bsz; ++j) {
                auto qn = normalize_rows(g, queries[j]);
                sim_rows.push_back(g.max_colwise(g.matmul_nt(qn, tn)));  // (1, B)
            }
            auto itc = infonce(g, g.scale(g.concat_rows(sim_rows), inv_tau));

            // ITG: teacher-forced captioning.
            Var itg;
            for (int j = 0; j < bsz; ++j) {
                auto nll = mf.itg_nll(queries[j], gen_ids[idx[j]]);
                itg = (j == 0) ? nll : g.add(itg, nll);
            }
            itg = g.scale(itg, 1.0 / bsz);

            // ITM: matched pair vs shifted in-batch negative.
            Var itm;
            for (int j = 0; j < bsz; ++j) {
                int neg = idx[(j + 1) % bsz];
                auto pos_logit = mf.itm_mean_logit(patch[j], enc_ids[idx[j]]);
                auto neg_logit = mf.itm_mean_logit(patch[j], enc_ids[neg]);
                auto bce = g.add(g.softplus(g.scale(pos_logit, -1.0)), g.softplus(neg_logit));
                itm = (j == 0) ? bce : g.add(itm, bce);
            }
            itm = g.scale(itm, 1.0 / bsz);

            return g.add(g.add(itc, itg), itm);
        },
        cfg.verbose, "qformer");
}

} // namespace

SurrogateBundle pretrain_stage1(BundleKind kind, const Dims& dims, const Vocabulary& vocab,
                                const CaptionCorpus& corpus, const PretrainConfig& cfg,
                                std::uint64_t seed) {
    check_corpus(corpus, cfg);
    SurrogateBundle b = make_bundle(kind, dims, vocab, seed);
    Rng rng(Rng::mix(seed, 0x7e617));
    train_encoders(b, corpus, cfg, rng);
    train_qformer(b, corpus, cfg, rng);
    return b;
}

SurrogateBundle pretrain_text_encoder(const Dims& dims, const Vocabulary& vocab,
                                      const CaptionCorpus& corpus, const PretrainConfig& cfg,
                                      std::uint64_t seed) {
    check_corpus(corpus, cfg);
    SurrogateBundle full = make_bundle(BundleKind::surrogate, dims, vocab, seed);
    Rng rng(Rng::mix(seed, 0x7e617));
    train_encoders(full, corpus, cfg, rng);

    SurrogateBundle out;
    out.kind = BundleKind::text_encoder;
    out.dims = dims;
    out.vocab = vocab;
    for (const auto& [name, m] : full.params) {
        if (name.rfind("txt.", 0) == 0) out.params.emplace(name, m);
    }
    return out;
}

Embedding text_embedding(const Runtime& rt, const std::string& text) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    return g.val(mf.text_encoder_cls(rt.bundle->vocab.encode_for_encoder(text))).v;
}

Embedding qformer_text_embedding(const Runtime& rt, const std::string& text) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    return g.val(mf.qformer_text_cls(rt.bundle->vocab.encode_for_encoder(text))).v;
}

Mat<double> query_outputs(const Runtime& rt, const Image& x) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    return g.val(mf.qformer_queries(mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false)))));
}

Embedding global_image_embedding(const Runtime& rt, const Image& x) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    return g.val(mf.global_embedding(mf.encode_image(mf.image_leaf(x, false)))).v;
}

Mat<double> patch_embeddings_value(const Runtime& rt, const Image& x) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    return g.val(mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false))));
}

double itm_mean_logit_value(const Runtime& rt, const Image& x, const std::string& text) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    auto patch = mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false)));
    return g.scalar_val(mf.itm_mean_logit(patch, rt.bundle->vocab.encode_for_encoder(text)));
}

double itg_nll_value(const Runtime& rt, const Image& x, const std::string& text) {
    Graph<double> g;
    ModelForward<double> mf(g, *rt.bundle, rt.params);
    auto q = mf.qformer_queries(mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false))));
    return g.scalar_val(mf.itg_nll(q, rt.bundle->vocab.encode_for_generation(text)));
}

Embedding text_embedding(const SurrogateBundle& b, const std::string& text) {
    return text_embedding(Runtime(b), text);
}
Embedding qformer_text_embedding(const SurrogateBundle& b, const std::string& text) {
    return qformer_text_embedding(Runtime(b), text);
}
Mat<double> query_outputs(const SurrogateBundle& b, const Image& x) {
    return query_outputs(Runtime(b), x);
}
Embedding global_image_embedding(const SurrogateBundle& b, const Image& x) {
    return global_image_embedding(Runtime(b), x);
}
Mat<double> patch_embeddings_value(const SurrogateBundle& b, const Image& x) {
    return patch_embeddings_value(Runtime(b), x);
}
double itm_mean_logit_value(const SurrogateBundle& b, const Image& x, const std::string& text) {
    return itm_mean_logit_value(Runtime(b), x, text);
}
double itg_nll_value(const SurrogateBundle& b, const Image& x, const std::string& text) {
    return itg_nll_value(Runtime(b), x, text);
}

double retrieval_accuracy(const SurrogateBundle& b, const CaptionCorpus& heldout) {
    if (heldout.empty()) throw std::invalid_argument("retrieval_accuracy: empty held-out set");
    Runtime rt(b);
    const int n = static_cast<int>(heldout.size());
    std::vector<Mat<double>> queries;
    queries.reserve(n);
    for (const auto& [img, cap] : heldout) queries.push_back(query_outputs(rt, img));

    int hits = 0;
    for (int c = 0; c < n; ++c) {
        Embedding e = qformer_text_embedding(rt, heldout[c].second);
        int best = -1;
        double best_sim = -2.0;
        for (int i = 0; i < n; ++i) {
            double sim = -2.0;
            for (int q = 0; q < queries[i].r; ++q) {
                Embedding row(queries[i].row_ptr(q), queries[i].row_ptr(q) + queries[i].c);
                sim = std::max(sim, cosine_similarity(row, e));
            }
            if (sim > best_sim) {
                best_sim = sim;
                best = i;
            }
        }
        if (best == c) ++hits;
    }
    return static_cast<double>(hits) / n;
}

double itm_separation(const SurrogateBundle& b, const CaptionCorpus& heldout) {
    if (heldout.size() < 2) throw std::invalid_argument("itm_separation: need >= 2 pairs");
    Runtime rt(b);
    const int n = static_cast<int>(heldout.size());
    int wins = 0;
    for (int i = 0; i < n; ++i) {
        double pos = itm_mean_logit_value(rt, heldout[i].first, heldout[i].second);
        double neg = itm_mean_logit_value(rt, heldout[i].first, heldout[(i + 1) % n].second);
        if (pos > neg) ++wins;
    }
    return static_cast<double>(wins) / n;
}

} // namespace ipga
