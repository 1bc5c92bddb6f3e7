#pragma once

#include "ipga/bundle.hpp"
#include "ipga/core.hpp"
#include "ipga/graph.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipga {

// A bundle plus its typed parameter snapshot, built once and shared by any
// number of forward passes (read-only, thread-safe).
template <class T>
struct BundleRuntime {
    const SurrogateBundle* bundle;
    TypedParams<T> params;
    explicit BundleRuntime(const SurrogateBundle& b)
        : bundle(&b), params(typed_params<T>(b.params)) {}
};

// Task-dependent attention pattern of the shared self-attention layers.
enum class QfTask {
    queries_only,   // query extraction (image branch alone)
    text_only,      // text transformer as encoder ([CLS] embedding)
    generation,     // queries form a prefix; text attends causally
    matching,       // fully bidirectional between queries and text
};

// Builds forward graphs for one bundle. A ModelForward owns nothing; it
// wires parameters from a typed snapshot into the caller's graph, binding
// each parameter to a single node so gradients accumulate correctly.
//
// `trainable(name)` decides which parameters become differentiable inputs;
// pass nullptr to bind everything as constants (inference / attacks, where
// gradients flow through the parameters but never into them).
template <class T>
class ModelForward {
public:
    using Var = typename Graph<T>::Var;
    using TrainFilter = std::function<bool(const std::string&)>;

    ModelForward(Graph<T>& g, const SurrogateBundle& bundle, const TypedParams<T>& tp,
                 TrainFilter trainable = nullptr)
        : g_(g), bundle_(bundle), tp_(tp), trainable_(std::move(trainable)) {}

    Graph<T>& graph() { return g_; }
    const Dims& dims() const { return bundle_.dims; }

    // Bound parameter vars in name order (for optimizer updates).
    const std::map<std::string, Var>& bound_params() const { return bound_; }

    // The typed snapshot must outlive the graph: frozen parameters bind as
    // non-owning constants.
    Var param(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        auto pit = tp_.find(name);
        if (pit == tp_.end()) throw std::out_of_range("model: missing parameter " + name);
        Var v = (trainable_ && trainable_(name)) ? g_.input(pit->second)
                                                 : g_.constant_ref(&pit->second);
        bound_.emplace(name, v);
        return v;
    }

    // ------------------------------------------------------------ image --

    Var image_leaf(const Image& img, bool differentiable) {
        if (img.h != dims().img_h || img.w != dims().img_w)
            throw std::invalid_argument("model: image shape does not match bundle dims");
        Mat<T> m(1, static_cast<int>(img.size()));
        for (std::size_t i = 0; i < img.size(); ++i) m.v[i] = static_cast<T>(img.v[i]);
        return differentiable ? g_.input(std::move(m)) : g_.constant(std::move(m));
    }

    // Visual encoder. Returns the (P+1, d) output sequence: row 0 is the
    // global [CLS] embedding, rows 1..P are patch embeddings.
    Var encode_image(Var image) {
        const Dims& dm = dims();
        if (g_.val(image).size() != static_cast<std::size_t>(3) * dm.img_h * dm.img_w)
            throw std::invalid_argument("model: image leaf has wrong element count");
        Var patches = g_.gather(image, patch_index_map(), dm.num_patches(), dm.patch_dim());
        Var tok = linear(patches, "enc.patch_proj");
        Var seq = g_.concat_rows({param("enc.cls"), tok});
        seq = g_.add(seq, param("enc.pos"));
        for (int l = 0; l < dm.enc_layers; ++l)
            seq = encoder_block(seq, "enc.l" + std::to_string(l));
        return layer_norm(seq, "enc.ln_f");
    }

    Var global_embedding(Var enc_seq) { return g_.slice_rows(enc_seq, 0, 1); }
    Var patch_embeddings(Var enc_seq) {
        return g_.slice_rows(enc_seq, 1, g_.val(enc_seq).r);
    }

    // ------------------------------------------------------------- text --

    // Text encoder g_psi -> (1, d) [CLS] embedding.
    Var text_encoder_cls(const std::vector<int>& ids) {
        auto toks = strip_pad(ids);
        check_text(toks, Vocabulary::kCls);
        Var seq = embed_tokens(toks, "txt.emb", "txt.pos");
        for (int l = 0; l < dims().txt_layers; ++l)
            seq = encoder_block(seq, "txt.l" + std::to_string(l));
        seq = layer_norm(seq, "txt.ln_f");
        return g_.slice_rows(seq, 0, 1);
    }

    // -------------------------------------------------------- Q-Former --

    // Query extraction: N x d query outputs for the given patch embeddings.
    Var qformer_queries(Var patch_emb) {
        return qformer_pass(patch_emb, Var{}, {}, QfTask::queries_only).queries;
    }

    // f_psi as text encoder -> (1, d) [CLS] embedding.
    Var qformer_text_cls(const std::vector<int>& ids) {
        auto toks = strip_pad(ids);
        check_text(toks, Vocabulary::kCls);
        return g_.slice_rows(qformer_pass(Var{}, Var{}, toks, QfTask::text_only).text, 0, 1);
    }

    // Mean token-level NLL of generating `ids` ([BOS] ... [EOS]) with the
    // query outputs as a causal prefix of the text transformer. The text
    // tokens attend to the prefix and to earlier text through the shared
    // self-attention; the prefix attends only to itself.
    Var itg_nll(Var query_outputs, const std::vector<int>& ids) {
        auto toks = strip_pad(ids);
        check_text(toks, Vocabulary::kBos);
        if (toks.back() != Vocabulary::kEos)
            throw std::invalid_argument("model: generation target must end with [EOS]");
        if (toks.size() < 2) throw std::invalid_argument("model: generation target too short");
        auto out = qformer_pass(Var{}, query_outputs, toks, QfTask::generation);
        int L = static_cast<int>(toks.size());
        Var pred_rows = g_.slice_rows(out.text, 0, L - 1);
        Var logits = linear(pred_rows, "qf.lm_head");
        Var logp = g_.log_softmax_rows(logits);
        std::vector<int> targets(toks.begin() + 1, toks.end());
        return g_.nll_rows(logp, targets);
    }

    // Next-token logits for greedy decoding: prefix is [BOS] w1 .. wk.
    Var itg_next_logits(Var query_outputs, const std::vector<int>& prefix) {
        check_text(prefix, Vocabulary::kBos);
        auto out = qformer_pass(Var{}, query_outputs, prefix, QfTask::generation);
        int L = static_cast<int>(prefix.size());
        Var last = g_.slice_rows(out.text, L - 1, L);
        return linear(last, "qf.lm_head");
    }

    // Per-query matching logits (N, 1) for the image-text pair. Queries run
    // with cross-attention to the patch embeddings and bidirectional shared
    // self-attention with the text.
    Var itm_query_logits(Var patch_emb, const std::vector<int>& ids) {
        auto toks = strip_pad(ids);
        check_text(toks, Vocabulary::kCls);
        auto out = qformer_pass(patch_emb, Var{}, toks, QfTask::matching);
        return linear(out.queries, "qf.itm_head");
    }

    Var itm_mean_logit(Var patch_emb, const std::vector<int>& ids) {
        return g_.mean_all(itm_query_logits(patch_emb, ids));
    }

    // Conditioned query outputs (N, d) of the matching pass; the victim
    // answer heads read these.
    Var conditioned_queries(Var patch_emb, const std::vector<int>& ids) {
        auto toks = strip_pad(ids);
        check_text(toks, Vocabulary::kCls);
        return qformer_pass(patch_emb, Var{}, toks, QfTask::matching).queries;
    }

    // Victim answer head -> (1, n_answers) logits.
    Var answer_logits(QuestionType qtype, Var cond_queries) {
        const Dims& dm = dims();
        Var flat = g_.reshape(cond_queries, 1, dm.n_queries * dm.d);
        std::string hp = std::string("vqa.") + question_type_name(qtype);
        Var h = g_.tanh_(linear(flat, hp + ".fc1"));
        return linear(h, hp + ".fc2");
    }

    // ---------------------------------------------------------- helpers --

    Var linear(Var x, const std::string& prefix) {
        Var w = param(prefix + ".w");
        Var b = param(prefix + ".b");
        return g_.add(g_.matmul(x, w), b);
    }

    Var layer_norm(Var x, const std::string& prefix) {
        return g_.layer_norm_rows(x, param(prefix + ".g"), param(prefix + ".b"), T(1e-5));
    }

    // Multi-head attention; kv may differ from q (cross-attention).
    // mask_bias, when valid, is an additive (nq, nkv) constant.
    Var attention(const std::string& prefix, Var xq, Var xkv, Var mask_bias) {
        Var q = linear(xq, prefix + ".wq");
        Var k = linear(xkv, prefix + ".wk");
        Var v = linear(xkv, prefix + ".wv");
        Var ctx = g_.attn_core(q, k, v, dims().n_heads, mask_bias);
        return linear(ctx, prefix + ".wo");
    }

private:
    struct QfOut {
        Var queries;  // invalid for text_only
        Var text;     // invalid for queries_only
    };

    // Pre-norm transformer block with full bidirectional self-attention.
    Var encoder_block(Var x, const std::string& prefix) {
        Var h = layer_norm(x, prefix + ".ln1");
        x = g_.add(x, attention(prefix + ".attn", h, h, Var{}));
        Var m = layer_norm(x, prefix + ".ln2");
        return g_.add(x, mlp(m, prefix + ".mlp"));
    }

    Var mlp(Var x, const std::string& prefix) {
        return linear(g_.gelu(linear(x, prefix + ".fc1")), prefix + ".fc2");
    }

    Var embed_tokens(const std::vector<int>& ids, const std::string& emb,
                     const std::string& pos) {
        std::vector<int> positions(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
        Var e = g_.rows_gather(param(emb), ids);
        Var p = g_.rows_gather(param(pos), positions);
        return g_.add(e, p);
    }

    // The stage-1 Q-Former joint pass. Query rows come first, text rows
    // after; cross-attention touches only query rows; feed-forwards are
    // separate per path while self-attention weights are shared.
    //
    // For queries_only / matching, the query rows start from the learned
    // query tokens and cross-attend to patch_emb. For generation, the rows
    // start from already-computed query outputs (query_init) and there is
    // no cross-attention.
    QfOut qformer_pass(Var patch_emb, Var query_init, const std::vector<int>& ids, QfTask task) {
        const Dims& dm = dims();
        const int N = (task == QfTask::text_only) ? 0 : dm.n_queries;
        const int L = static_cast<int>(ids.size());
        const int S = N + L;
        const bool has_image = patch_emb.valid();
        if ((task == QfTask::queries_only || task == QfTask::matching) && !has_image)
            throw std::invalid_argument("model: qformer task needs patch embeddings");
        if (task == QfTask::generation) {
            if (!query_init.valid())
                throw std::invalid_argument("model: generation needs query outputs");
            if (g_.val(query_init).r != dm.n_queries || g_.val(query_init).c != dm.d)
                throw std::invalid_argument("model: query outputs have wrong shape");
        }

        Var qrows = query_init.valid() ? query_init
                                       : (N > 0 ? param("qf.query_tokens") : Var{});
        Var x;
        if (N > 0 && L > 0) {
            x = g_.concat_rows({qrows, embed_tokens(ids, "qf.txt_emb", "qf.txt_pos")});
        } else if (N > 0) {
            x = qrows;
        } else {
            x = embed_tokens(ids, "qf.txt_emb", "qf.txt_pos");
        }

        Var mask = make_mask(task, N, L);
        for (int l = 0; l < dm.qf_layers; ++l) {
            std::string lp = "qf.l" + std::to_string(l);
            Var h = layer_norm(x, lp + ".ln_self");
            x = g_.add(x, attention(lp + ".self", h, h, mask));
            if (N > 0 && has_image) {
                Var xq = (L > 0) ? g_.slice_rows(x, 0, N) : x;
                Var hq = layer_norm(xq, lp + ".ln_cross");
                xq = g_.add(xq, attention(lp + ".cross", hq, patch_emb, Var{}));
                x = (L > 0) ? g_.concat_rows({xq, g_.slice_rows(x, N, S)}) : xq;
            }
            if (N > 0 && L > 0) {
                Var xq = g_.slice_rows(x, 0, N);
                Var xt = g_.slice_rows(x, N, S);
                xq = g_.add(xq, mlp(layer_norm(xq, lp + ".ln_fi"), lp + ".ffn_img"));
                xt = g_.add(xt, mlp(layer_norm(xt, lp + ".ln_ft"), lp + ".ffn_txt"));
                x = g_.concat_rows({xq, xt});
            } else if (N > 0) {
                x = g_.add(x, mlp(layer_norm(x, lp + ".ln_fi"), lp + ".ffn_img"));
            } else {
                x = g_.add(x, mlp(layer_norm(x, lp + ".ln_ft"), lp + ".ffn_txt"));
            }
        }

        QfOut out;
        if (N > 0 && task != QfTask::generation)
            out.queries = layer_norm((L > 0) ? g_.slice_rows(x, 0, N) : x, "qf.ln_f_img");
        if (L > 0)
            out.text = layer_norm((N > 0) ? g_.slice_rows(x, N, S) : x, "qf.ln_f_txt");
        return out;
    }

    // Additive attention bias: 0 = visible, -1e30 = hidden.
    Var make_mask(QfTask task, int N, int L) {
        if (task == QfTask::queries_only || task == QfTask::text_only ||
            task == QfTask::matching) {
            return Var{};  // fully bidirectional within the present rows
        }
        // generation: queries see only queries; text row i sees all queries
        // and text rows 0..i.
        const int S = N + L;
        Mat<T> m(S, S);
        const T hide = T(-1e30);
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < S; ++j) {
                bool visible;
                if (i < N) {
                    visible = j < N;
                } else {
                    visible = (j < N) || (j <= i);
                }
                m.at(i, j) = visible ? T(0) : hide;
            }
        }
        return g_.constant(std::move(m));
    }

    const std::vector<int>& patch_index_map() {
        if (patch_map_.empty()) {
            const Dims& dm = dims();
            patch_map_.reserve(static_cast<std::size_t>(dm.num_patches()) * dm.patch_dim());
            for (int gy = 0; gy < dm.patches_y(); ++gy) {
                for (int gx = 0; gx < dm.patches_x(); ++gx) {
                    for (int ch = 0; ch < 3; ++ch) {
                        for (int py = 0; py < dm.patch; ++py) {
                            for (int px = 0; px < dm.patch; ++px) {
                                int y = gy * dm.patch + py;
                                int x = gx * dm.patch + px;
                                patch_map_.push_back((ch * dm.img_h + y) * dm.img_w + x);
                            }
                        }
                    }
                }
            }
        }
        return patch_map_;
    }

    static std::vector<int> strip_pad(const std::vector<int>& ids) {
        std::vector<int> out;
        out.reserve(ids.size());
        for (int i : ids)
            if (i != Vocabulary::kPad) out.push_back(i);
        return out;
    }

    void check_text(const std::vector<int>& ids, int expected_first) const {
        if (ids.empty()) throw std::invalid_argument("model: empty token sequence");
        if (static_cast<int>(ids.size()) > dims().max_text_len)
            throw std::invalid_argument("model: text exceeds max length");
        if (ids[0] != expected_first)
            throw std::invalid_argument("model: text must start with the expected special token");
        for (int i : ids) {
            if (i < 0 || i >= bundle_.vocab.size())
                throw std::invalid_argument("model: token id outside vocabulary");
        }
    }

    Graph<T>& g_;
    const SurrogateBundle& bundle_;
    const TypedParams<T>& tp_;
    TrainFilter trainable_;
    std::map<std::string, Var> bound_;
    std::vector<int> patch_map_;
};

} // namespace ipga
