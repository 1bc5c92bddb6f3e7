#include "ipga/victim.hpp"

#include "ipga/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ipga {

namespace {

int answer_index(QuestionType t, const std::string& answer) {
    auto domain = answers_for(t);
    for (std::size_t i = 0; i < domain.size(); ++i)
        if (domain[i] == answer) return static_cast<int>(i);
    throw std::invalid_argument("victim: answer '" + answer + "' outside domain of type " +
                                question_type_name(t));
}

// Flattened conditioned query outputs for (image, question) with the frozen
// backbone.
Mat<double> conditioned_feature(const SurrogateBundle& b, const TypedParams<double>& tp,
                                const Image& x, const std::string& question) {
    Graph<double> g;
    ModelForward<double> mf(g, b, tp);
    auto patch = mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false)));
    auto cond = mf.conditioned_queries(patch, b.vocab.encode_for_encoder(question));
    auto flat = g.reshape(cond, 1, b.dims.n_queries * b.dims.d);
    return g.val(flat);
}

// Adam restricted to one head; graphs here are tiny MLP forwards over
// cached features.
struct HeadAdam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int t = 0;
    std::map<std::string, Mat<double>> m, v;

    void step(ParamStore& params, const std::map<std::string, Mat<double>>& grads) {
        ++t;
        double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
        for (const auto& [name, g] : grads) {
            Mat<double>& p = params.at(name);
            if (m[name].size() != g.size()) {
                m[name] = Mat<double>::zeros(g.r, g.c);
                v[name] = Mat<double>::zeros(g.r, g.c);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[name].v[i] = b1 * m[name].v[i] + (1.0 - b1) * g.v[i];
                v[name].v[i] = b2 * v[name].v[i] + (1.0 - b2) * g.v[i] * g.v[i];
                p.v[i] -= lr * (m[name].v[i] / bc1) / (std::sqrt(v[name].v[i] / bc2) + eps);
            }
        }
    }
};

} // namespace

void train_victim_heads(SurrogateBundle& victim, const std::vector<VqaSample>& samples,
                        const VqaTrainConfig& cfg, std::uint64_t seed) {
    if (victim.kind != BundleKind::victim)
        throw std::invalid_argument("train_victim_heads: bundle is not a victim");
    if (samples.empty()) throw std::invalid_argument("train_victim_heads: no samples");

    // Cache features once; the backbone is frozen during head training.
    TypedParams<double> tp = typed_params<double>(victim.params);
    struct Cached {
        Mat<double> feature;
        int label;
        QuestionType type;
    };
    std::vector<Cached> cache;
    cache.reserve(samples.size());
    for (const auto& s : samples) {
        cache.push_back({conditioned_feature(victim, tp, s.image, s.qa.question),
                         answer_index(s.qa.type, s.qa.answer), s.qa.type});
    }

    const QuestionType types[] = {QuestionType::color, QuestionType::shape,
                                  QuestionType::existence, QuestionType::position};
    Rng rng(Rng::mix(seed, 0x40a5));
    for (QuestionType t : types) {
        std::vector<int> idx;
        for (int i = 0; i < static_cast<int>(cache.size()); ++i)
            if (cache[i].type == t) idx.push_back(i);
        if (idx.empty()) continue;

        std::string prefix = std::string("vqa.") + question_type_name(t);
        HeadAdam adam{cfg.lr};
        auto filter = [&prefix](const std::string& n) { return n.rfind(prefix, 0) == 0; };

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
                std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
            double ep_loss = 0.0;
            int nb = 0;
            for (std::size_t start = 0; start < idx.size(); start += cfg.batch) {
                std::size_t end = std::min(idx.size(), start + cfg.batch);
                int bsz = static_cast<int>(end - start);
                Mat<double> feats(bsz, victim.dims.n_queries * victim.dims.d);
                std::vector<int> labels(bsz);
                for (int j = 0; j < bsz; ++j) {
                    const Cached& c = cache[idx[start + j]];
                    std::copy(c.feature.v.begin(), c.feature.v.end(), feats.row_ptr(j));
                    labels[j] = c.label;
                }
                TypedParams<double> tph = typed_params<double>(victim.params);
                Graph<double> g;
                ModelForward<double> mf(g, victim, tph, filter);
                auto x = g.constant(std::move(feats));
                auto h = g.tanh_(mf.linear(x, prefix + ".fc1"));
                auto logits = mf.linear(h, prefix + ".fc2");
                auto loss = g.nll_rows(g.log_softmax_rows(logits), labels);
                ep_loss += g.scalar_val(loss);
                ++nb;
                g.backward(loss);
                std::map<std::string, Mat<double>> grads;
                for (const auto& [name, var] : mf.bound_params())
                    if (g.needs_grad(var)) grads.emplace(name, g.grad(var));
                adam.step(victim.params, grads);
            }
            if (cfg.verbose)
                std::fprintf(stderr, "[vqa] %s epoch %d/%d loss %.4f\n", question_type_name(t),
                             epoch + 1, cfg.epochs, ep_loss / std::max(nb, 1));
        }
    }
}

std::string victim_answer(const Runtime& rt, const Image& x, const QAPair& question) {
    const SurrogateBundle& victim = *rt.bundle;
    if (!victim.has_param(std::string("vqa.") + question_type_name(question.type) + ".fc1.w"))
        throw std::invalid_argument("victim_answer: unsupported question type for this bundle");
    Graph<double> g;
    ModelForward<double> mf(g, victim, rt.params);
    auto patch = mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false)));
    auto cond = mf.conditioned_queries(patch, victim.vocab.encode_for_encoder(question.question));
    auto logits = mf.answer_logits(question.type, cond);
    const Mat<double>& lv = g.val(logits);
    int best = 0;
    for (int i = 1; i < lv.c; ++i)
        if (lv.v[i] > lv.v[best]) best = i;
    return answers_for(question.type)[best];
}

std::string victim_answer(const SurrogateBundle& victim, const Image& x, const QAPair& question) {
    return victim_answer(Runtime(victim), x, question);
}

std::vector<int> victim_caption_ids(const Runtime& rt, const Image& x) {
    const SurrogateBundle& victim = *rt.bundle;
    Mat<double> qv;
    {
        Graph<double> g;
        ModelForward<double> mf(g, victim, rt.params);
        auto patch = mf.patch_embeddings(mf.encode_image(mf.image_leaf(x, false)));
        qv = g.val(mf.qformer_queries(patch));
    }
    std::vector<int> prefix = {Vocabulary::kBos};
    while (static_cast<int>(prefix.size()) < victim.dims.max_text_len) {
        Graph<double> gd;
        ModelForward<double> mfd(gd, victim, rt.params);
        auto logits = mfd.itg_next_logits(gd.constant_ref(&qv), prefix);
        const Mat<double>& lv = gd.val(logits);
        int best = 0;
        for (int i = 1; i < lv.c; ++i)
            if (lv.v[i] > lv.v[best]) best = i;
        if (best == Vocabulary::kEos) break;
        prefix.push_back(best);
    }
    return {prefix.begin() + 1, prefix.end()};
}

std::string victim_caption(const Runtime& rt, const Image& x) {
    return rt.bundle->vocab.decode(victim_caption_ids(rt, x));
}

std::string victim_caption(const SurrogateBundle& victim, const Image& x) {
    return victim_caption(Runtime(victim), x);
}

double victim_vqa_accuracy(const SurrogateBundle& victim, const std::vector<VqaSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("victim_vqa_accuracy: no samples");
    Runtime rt(victim);
    int hits = 0;
    for (const auto& s : samples)
        if (victim_answer(rt, s.image, s.qa) == s.qa.answer) ++hits;
    return static_cast<double>(hits) / samples.size();
}

} // namespace ipga
