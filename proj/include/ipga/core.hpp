#pragma once

#include "ipga/graph.hpp"
#include "ipga/mat.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ipga {

// 3 x H x W image, channel-major, values in [0,1].
struct Image {
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Image() = default;
    Image(int height, int width) : h(height), w(width), v(3u * height * width, 0.0) {}

    std::size_t size() const { return v.size(); }
    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
};

using Embedding = std::vector<double>;

// a.b / (|a||b|). Throws std::domain_error naming the offending argument
// when either norm is zero.
double cosine_similarity(const Embedding& a, const Embedding& b);

// Clamp x_adv into [x_clean - eps, x_clean + eps], then into [0,1].
// Idempotent. Throws on shape mismatch or eps < 0.
Image clip_linf(const Image& x_adv, const Image& x_clean, double eps);

// Elementwise sign with sign(0) = 0. Throws std::domain_error on NaN input.
std::vector<double> sign_of(const std::vector<double>& g);

// Builds the loss with loss_fn on a differentiable image leaf and returns
// the exact reverse-mode gradient w.r.t. every pixel (3*H*W values).
// The image leaf handed to loss_fn has shape (1, 3*H*W).
// Throws std::runtime_error carrying the loss value if it is not finite.
using ImageLossFn = std::function<typename Graph<double>::Var(Graph<double>&,
                                                              typename Graph<double>::Var)>;
std::vector<double> gradient(const ImageLossFn& loss_fn, const Image& x);

// max_i |a_i - b_i| over two images of equal shape.
double linf_distance(const Image& a, const Image& b);

bool image_in_unit_range(const Image& x);

} // namespace ipga
