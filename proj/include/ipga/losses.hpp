#pragma once

#include "ipga/model.hpp"

#include <stdexcept>
#include <vector>

namespace ipga {

// Scalars steering the attack objective: alpha trades the projector-level
// loss against the encoder-level loss, beta/gamma weight the clean-text
// deviation terms, lambda_res scales the residual query regularizer, and k
// is the number of semantically relevant queries kept unconstrained.
struct LossWeights {
    double alpha = 0.25;
    double beta = 0.5;
    double gamma = 1.0;
    double lambda_res = 1e-4;
    int k = 3;

    void validate(int n_queries, bool rqa_active) const {
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw std::invalid_argument("weights: alpha must lie in [0,1]");
        if (beta < 0.0) throw std::invalid_argument("weights: beta must be >= 0");
        if (gamma < 0.0) throw std::invalid_argument("weights: gamma must be >= 0");
        if (lambda_res < 0.0) throw std::invalid_argument("weights: lambda_res must be >= 0");
        if (rqa_active) {
            if (k < 1 || k >= n_queries)
                throw std::invalid_argument(
                    "weights: k must satisfy 1 <= k < N so the residual set is non-empty");
        }
    }
};

// Disjoint cover of {0..N-1}: the k query indices most similar to the
// target embedding, and the rest. Indices are 0-based and sorted.
struct IndexPartition {
    std::vector<int> semantic;
    std::vector<int> residual;
};

// Ties break toward the lower index.
IndexPartition topk_semantic_indices(const Mat<double>& queries, const Embedding& e_tar, int k);

// ---------------------------------------------------------------------------
// Graph-level loss builders. Zero-norm embeddings are rejected eagerly
// (values are known while the graph is built).
// ---------------------------------------------------------------------------

// Cosine of each row of Q against the single row e -> (N, 1).
template <class T>
typename Graph<T>::Var cosine_rows(Graph<T>& g, typename Graph<T>::Var q,
                                   typename Graph<T>::Var e, const char* who) {
    if (g.val(e).r != 1 || g.val(e).c != g.val(q).c)
        throw std::invalid_argument("cosine_rows: embedding shape mismatch");
    auto qn = g.row_l2norm(q);
    auto en = g.row_l2norm(e);
    for (T n : g.val(qn).v) {
        if (n == T(0)) throw std::domain_error(std::string("cosine: zero-norm query row in ") + who);
    }
    if (g.val(en).v[0] == T(0))
        throw std::domain_error(std::string("cosine: zero-norm embedding in ") + who);
    auto dots = g.matmul_nt(q, e);          // (N, 1)
    auto cos = g.div(dots, qn);             // same-shape (N,1)
    return g.div(cos, en);                  // scalar broadcast
}

// gamma * max(max_i cos(q_i, e_clean) - s_tar, 0) - s_tar,
// with s_tar = max_i cos(q_i, e_tar).
template <class T>
typename Graph<T>::Var itc_loss(Graph<T>& g, typename Graph<T>::Var queries_adv,
                                typename Graph<T>::Var e_tar, typename Graph<T>::Var e_clean,
                                T gamma) {
    auto s_tar = g.max_all(cosine_rows(g, queries_adv, e_tar, "e_tar"));
    auto s_clean_raw = g.max_all(cosine_rows(g, queries_adv, e_clean, "e_clean"));
    auto s_clean = g.relu(g.sub(s_clean_raw, s_tar));
    return g.sub(g.scale(s_clean, gamma), s_tar);
}

// gamma * max(u_tar - u_clean_nll, 0) + u_tar, where u_* are teacher-forced
// mean NLLs of the target/clean texts given the adversarial query outputs.
template <class T>
typename Graph<T>::Var itg_loss(ModelForward<T>& mf, typename Graph<T>::Var queries_adv,
                                const std::vector<int>& t_tar, const std::vector<int>& t_clean,
                                T gamma) {
    Graph<T>& g = mf.graph();
    auto u_tar = mf.itg_nll(queries_adv, t_tar);
    auto u_clean_nll = mf.itg_nll(queries_adv, t_clean);
    auto u_clean = g.relu(g.sub(u_tar, u_clean_nll));
    return g.add(g.scale(u_clean, gamma), u_tar);
}

// Binary cross-entropy on a logit, in the stable softplus form.
template <class T>
typename Graph<T>::Var bce_with_logit(Graph<T>& g, typename Graph<T>::Var logit, int label) {
    // label 1: softplus(-v); label 0: softplus(v)
    return g.softplus(label == 1 ? g.scale(logit, T(-1)) : logit);
}

// gamma * BCE(v(t_clean), 0) + BCE(v(t_tar), 1) where v is the mean
// per-query matching logit of the joint pass.
template <class T>
typename Graph<T>::Var itm_loss(ModelForward<T>& mf, typename Graph<T>::Var patch_emb,
                                const std::vector<int>& t_tar_cls,
                                const std::vector<int>& t_clean_cls, T gamma) {
    Graph<T>& g = mf.graph();
    auto v_tar = mf.itm_mean_logit(patch_emb, t_tar_cls);
    auto v_clean = mf.itm_mean_logit(patch_emb, t_clean_cls);
    return g.add(g.scale(bce_with_logit(g, v_clean, 0), gamma), bce_with_logit(g, v_tar, 1));
}

// Sum of the three projector-level losses.
template <class T>
typename Graph<T>::Var qformer_loss(Graph<T>& g, typename Graph<T>::Var itc,
                                    typename Graph<T>::Var itg, typename Graph<T>::Var itm) {
    return g.add(g.add(itc, itg), itm);
}

// beta * cos(g_phi(x_adv), g_psi(t_clean)) - cos(g_phi(x_adv), g_psi(t_tar)).
template <class T>
typename Graph<T>::Var encoder_loss(Graph<T>& g, typename Graph<T>::Var global_emb,
                                    typename Graph<T>::Var e_tar_txt,
                                    typename Graph<T>::Var e_clean_txt, T beta) {
    auto z_tar = cosine_rows(g, global_emb, e_tar_txt, "g_psi(t_tar)");
    auto z_clean = cosine_rows(g, global_emb, e_clean_txt, "g_psi(t_clean)");
    return g.sub(g.scale(g.sum_all(z_clean), beta), g.sum_all(z_tar));
}

// alpha * qformer_term + (1 - alpha) * encoder_term.
template <class T>
typename Graph<T>::Var ipga_loss(Graph<T>& g, T alpha, typename Graph<T>::Var qformer_term,
                                 typename Graph<T>::Var encoder_term) {
    if (!(alpha >= T(0) && alpha <= T(1)))
        throw std::invalid_argument("ipga_loss: alpha must lie in [0,1]");
    return g.add(g.scale(qformer_term, alpha), g.scale(encoder_term, T(1) - alpha));
}

// Sum over residual rows of ||q_adv_i - q_clean_i||^2.
template <class T>
typename Graph<T>::Var residual_loss(Graph<T>& g, typename Graph<T>::Var queries_adv,
                                     typename Graph<T>::Var queries_clean,
                                     const IndexPartition& partition) {
    if (!g.val(queries_adv).same_shape(g.val(queries_clean)))
        throw std::invalid_argument("residual_loss: query set shapes differ");
    if (partition.residual.empty())
        throw std::invalid_argument("residual_loss: empty residual set");
    auto ra = g.rows_gather(queries_adv, partition.residual);
    auto rc = g.rows_gather(queries_clean, partition.residual);
    auto diff = g.sub(ra, rc);
    return g.sum_all(g.mul(diff, diff));
}

// ipga_term + lambda * residual_term.
template <class T>
typename Graph<T>::Var ipga_r_loss(Graph<T>& g, typename Graph<T>::Var ipga_term,
                                   typename Graph<T>::Var residual_term, T lambda) {
    if (lambda < T(0)) throw std::invalid_argument("ipga_r_loss: lambda must be >= 0");
    return g.add(ipga_term, g.scale(residual_term, lambda));
}

// ---------------------------------------------------------------------------
// Value-level conveniences (tests and tools); these run the same graph
// builders forward-only.
// ---------------------------------------------------------------------------

double itc_loss_value(const Mat<double>& queries, const Embedding& e_tar,
                      const Embedding& e_clean, double gamma);
double residual_loss_value(const Mat<double>& queries_adv, const Mat<double>& queries_clean,
                           const IndexPartition& partition);
double ipga_loss_value(double alpha, double qformer_term, double encoder_term);
double ipga_r_loss_value(double ipga_term, double residual_term, double lambda);

} // namespace ipga
