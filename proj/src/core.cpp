#include "ipga/core.hpp"

#include "ipga/kernels.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ipga {

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    if (a.empty()) throw std::invalid_argument("cosine_similarity: empty vectors");
    double na = std::sqrt(kernels::dot(a.size(), a.data(), a.data()));
    double nb = std::sqrt(kernels::dot(b.size(), b.data(), b.data()));
    if (na == 0.0) throw std::domain_error("cosine_similarity: first argument has zero norm");
    if (nb == 0.0) throw std::domain_error("cosine_similarity: second argument has zero norm");
    return kernels::dot(a.size(), a.data(), b.data()) / (na * nb);
}

Image clip_linf(const Image& x_adv, const Image& x_clean, double eps) {
    if (!x_adv.same_shape(x_clean))
        throw std::invalid_argument("clip_linf: shape mismatch");
    if (eps < 0.0) throw std::invalid_argument("clip_linf: negative epsilon");
    Image out(x_adv.h, x_adv.w);
    std::size_t n = x_adv.size();
    std::vector<double> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        double l = x_clean.v[i] - eps;
        double h = x_clean.v[i] + eps;
        lo[i] = l < 0.0 ? 0.0 : l;
        hi[i] = h > 1.0 ? 1.0 : h;
    }
    kernels::clamp_box(n, x_adv.v.data(), lo.data(), hi.data(), out.v.data());
    return out;
}

std::vector<double> sign_of(const std::vector<double>& g) {
    for (double x : g) {
        if (std::isnan(x)) throw std::domain_error("sign: NaN in input");
    }
    std::vector<double> out(g.size());
    kernels::sign(g.size(), g.data(), out.data());
    return out;
}

std::vector<double> gradient(const ImageLossFn& loss_fn, const Image& x) {
    Graph<double> g;
    auto leaf = g.input(Mat<double>(1, static_cast<int>(x.size()), x.v));
    auto loss = loss_fn(g, leaf);
    double lv = g.scalar_val(loss);
    if (!std::isfinite(lv)) {
        std::ostringstream os;
        os << "gradient: loss is not finite (value = " << lv << ")";
        throw std::runtime_error(os.str());
    }
    g.backward(loss);
    return g.grad(leaf).v;
}

double linf_distance(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("linf_distance: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

bool image_in_unit_range(const Image& x) {
    for (double e : x.v) {
        if (!(e >= 0.0 && e <= 1.0)) return false;
    }
    return true;
}

} // namespace ipga
