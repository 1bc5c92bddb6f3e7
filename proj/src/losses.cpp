#include "ipga/losses.hpp"

#include "ipga/core.hpp"

#include <algorithm>
#include <numeric>

namespace ipga {

IndexPartition topk_semantic_indices(const Mat<double>& queries, const Embedding& e_tar, int k) {
    const int n = queries.r;
    if (k < 1 || k >= n)
        throw std::invalid_argument("topk_semantic_indices: k must satisfy 1 <= k < N");
    if (static_cast<int>(e_tar.size()) != queries.c)
        throw std::invalid_argument("topk_semantic_indices: embedding dimension mismatch");

    std::vector<double> sims(n);
    for (int i = 0; i < n; ++i) {
        Embedding q(queries.row_ptr(i), queries.row_ptr(i) + queries.c);
        sims[i] = cosine_similarity(q, e_tar);
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;  // ties toward the lower index
    });
    IndexPartition p;
    p.semantic.assign(order.begin(), order.begin() + k);
    p.residual.assign(order.begin() + k, order.end());
    std::sort(p.semantic.begin(), p.semantic.end());
    std::sort(p.residual.begin(), p.residual.end());
    return p;
}

double itc_loss_value(const Mat<double>& queries, const Embedding& e_tar,
                      const Embedding& e_clean, double gamma) {
    Graph<double> g;
    auto q = g.constant(queries);
    auto et = g.constant(Mat<double>::row(e_tar));
    auto ec = g.constant(Mat<double>::row(e_clean));
    return g.scalar_val(itc_loss<double>(g, q, et, ec, gamma));
}

double residual_loss_value(const Mat<double>& queries_adv, const Mat<double>& queries_clean,
                           const IndexPartition& partition) {
    Graph<double> g;
    auto qa = g.constant(queries_adv);
    auto qc = g.constant(queries_clean);
    return g.scalar_val(residual_loss<double>(g, qa, qc, partition));
}

double ipga_loss_value(double alpha, double qformer_term, double encoder_term) {
    Graph<double> g;
    return g.scalar_val(ipga_loss<double>(g, alpha, g.constant_scalar(qformer_term),
                                          g.constant_scalar(encoder_term)));
}

double ipga_r_loss_value(double ipga_term, double residual_term, double lambda) {
    Graph<double> g;
    return g.scalar_val(ipga_r_loss<double>(g, g.constant_scalar(ipga_term),
                                            g.constant_scalar(residual_term), lambda));
}

} // namespace ipga
