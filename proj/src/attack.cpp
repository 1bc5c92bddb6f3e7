#include "ipga/attack.hpp"

#include "ipga/kernels.hpp"
#include "ipga/model.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace ipga {

const char* optimizer_kind_name(OptimizerKind k) {
    return k == OptimizerKind::nifgsm ? "nifgsm" : "vanilla_ifgsm";
}

OptimizerKind optimizer_kind_from_name(const std::string& s) {
    if (s == "nifgsm") return OptimizerKind::nifgsm;
    if (s == "vanilla_ifgsm") return OptimizerKind::vanilla_ifgsm;
    throw std::invalid_argument("unknown optimizer kind: " + s);
}

const char* attack_mode_name(AttackMode m) {
    return m == AttackMode::global ? "global" : "fine_grained";
}

AttackMode attack_mode_from_name(const std::string& s) {
    if (s == "global") return AttackMode::global;
    if (s == "fine_grained") return AttackMode::fine_grained;
    throw std::invalid_argument("unknown attack mode: " + s);
}

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_name(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw std::invalid_argument("unknown precision: " + s);
}

void AttackConfig::validate(int n_queries, bool rqa) const {
    if (epsilon < 0.0 || epsilon > 1.0)
        throw std::invalid_argument("attack: epsilon must lie in [0,1]");
    if (eta < 0.0) throw std::invalid_argument("attack: eta must be >= 0");
    if (steps < 1) throw std::invalid_argument("attack: need at least one iteration");
    if (mu < 0.0) throw std::invalid_argument("attack: mu must be >= 0");
    weights.validate(n_queries, rqa);
    if (eta > epsilon && !quiet)
        std::fprintf(stderr, "[attack] warning: step size eta=%g exceeds epsilon=%g\n", eta,
                     epsilon);
}

void nifgsm_update(std::vector<double>& momentum, const std::vector<double>& grad, double mu,
                   std::vector<double>& direction) {
    if (momentum.size() != grad.size())
        throw std::invalid_argument("nifgsm_update: state/gradient size mismatch");
    direction.assign(grad.size(), 0.0);
    if (mu == 0.0) {
        kernels::sign(grad.size(), grad.data(), direction.data());
        return;
    }
    double l1 = kernels::l1_norm(grad.size(), grad.data());
    if (l1 == 0.0) return;  // momentum unchanged, zero direction
    kernels::scale(momentum.size(), mu, momentum.data(), momentum.data());
    kernels::axpy(momentum.size(), 1.0 / l1, grad.data(), momentum.data());
    kernels::sign(momentum.size(), momentum.data(), direction.data());
}

std::vector<double> nifgsm_lookahead(const std::vector<double>& x,
                                     const std::vector<double>& momentum, double mu, double eta) {
    if (x.size() != momentum.size())
        throw std::invalid_argument("nifgsm_lookahead: size mismatch");
    std::vector<double> out = x;
    kernels::axpy(out.size(), -eta * mu, momentum.data(), out.data());
    return out;
}

namespace {

// Bounds of the feasible box in working precision T, conservative so that
// any T value inside them satisfies the double-precision constraint
// |x - clean| <= eps and x in [0,1] exactly.
template <class T>
void feasible_bounds(const Image& clean, double eps, std::vector<T>& lo, std::vector<T>& hi) {
    std::size_t n = clean.size();
    lo.resize(n);
    hi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double l = std::max(clean.v[i] - eps, 0.0);
        double h = std::min(clean.v[i] + eps, 1.0);
        if constexpr (std::is_same_v<T, double>) {
            lo[i] = l;
            hi[i] = h;
        } else {
            float lf = static_cast<float>(l);
            if (static_cast<double>(lf) < l) lf = std::nextafter(lf, std::numeric_limits<float>::max());
            float hf = static_cast<float>(h);
            if (static_cast<double>(hf) > h) hf = std::nextafter(hf, -std::numeric_limits<float>::max());
            lo[i] = lf;
            hi[i] = hf;
            if (lo[i] > hi[i]) {
                // Interval narrower than float resolution; pin to one point.
                float c = static_cast<float>(std::min(std::max(clean.v[i], l), h));
                lo[i] = hi[i] = c;
            }
        }
    }
}

template <class T>
struct TextCache {
    Mat<T> e_tar_qf, e_clean_qf;     // f_psi [CLS] embeddings
    Mat<T> e_tar_txt, e_clean_txt;   // g_psi embeddings (encoder loss)
    Mat<double> e_tar_qf_f64;        // for top-k selection
    std::vector<int> tar_gen, clean_gen;   // [BOS] ... [EOS]
    std::vector<int> tar_cls, clean_cls;   // [CLS] ...
};

// Target/clean text embeddings are computed once per attack and cached.
template <class T>
TextCache<T> cache_texts(const SurrogateBundle& bundle, const TypedParams<double>& p64,
                         const std::string& t_tar, const std::string& t_clean, bool need_qf,
                         bool need_encoder) {
    TextCache<T> out;
    const Vocabulary& voc = bundle.vocab;
    out.tar_gen = voc.encode_for_generation(t_tar);
    out.clean_gen = voc.encode_for_generation(t_clean);
    out.tar_cls = voc.encode_for_encoder(t_tar);
    out.clean_cls = voc.encode_for_encoder(t_clean);

    Graph<double> g;
    ModelForward<double> mf(g, bundle, p64);
    if (need_qf) {
        out.e_tar_qf_f64 = g.val(mf.qformer_text_cls(out.tar_cls));
        out.e_tar_qf = out.e_tar_qf_f64.template cast<T>();
        out.e_clean_qf = g.val(mf.qformer_text_cls(out.clean_cls)).template cast<T>();
    }
    if (need_encoder) {
        out.e_tar_txt = g.val(mf.text_encoder_cls(out.tar_cls)).template cast<T>();
        out.e_clean_txt = g.val(mf.text_encoder_cls(out.clean_cls)).template cast<T>();
    }
    return out;
}

template <class T>
AttackResult run_attack_impl(const Image& x_clean, const std::string& t_tar,
                             const std::string& t_clean, const SurrogateBundle& bundle,
                             const AttackConfig& cfg, bool rqa) {
    using Var = typename Graph<T>::Var;
    const Dims& dm = bundle.dims;
    cfg.validate(dm.n_queries, rqa);
    if (x_clean.h != dm.img_h || x_clean.w != dm.img_w)
        throw std::invalid_argument("attack: image shape does not match bundle");
    if (t_tar == t_clean && !cfg.quiet)
        std::fprintf(stderr, "[attack] warning: target text equals clean text\n");

    const double alpha = cfg.weights.alpha;
    const double lambda = cfg.weights.lambda_res;
    const bool use_qf_loss = alpha > 0.0;
    const bool use_enc_loss = alpha < 1.0;
    const bool need_queries = use_qf_loss || rqa;

    TypedParams<double> p64 = typed_params<double>(bundle.params);
    TypedParams<T> params = typed_params<T>(bundle.params);
    TextCache<T> texts =
        cache_texts<T>(bundle, p64, t_tar, t_clean, use_qf_loss || need_queries, use_enc_loss);

    const std::size_t n = x_clean.size();
    std::vector<T> lo, hi;
    feasible_bounds<T>(x_clean, cfg.epsilon, lo, hi);

    // x_adv^(0) = clean image, projected into the representable box.
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<T>(x_clean.v[i]);
    kernels::clamp_box(n, x.data(), lo.data(), hi.data(), x.data());

    // Clean query outputs: the anchor the residual regularizer pulls toward.
    Mat<T> clean_queries;
    if (rqa) {
        Graph<T> g;
        ModelForward<T> mf(g, bundle, params);
        Var img = g.constant(Mat<T>(1, static_cast<int>(n), x));
        clean_queries = g.val(mf.qformer_queries(mf.patch_embeddings(mf.encode_image(img))));
    }

    std::vector<T> momentum(n, T(0));
    std::vector<T> grad(n), direction(n), x_eval(n);

    AttackResult res;
    res.loss_trace.reserve(cfg.steps);
    bool all_feasible = true;

    Embedding e_tar_for_topk;
    if (need_queries)
        e_tar_for_topk.assign(texts.e_tar_qf_f64.v.begin(), texts.e_tar_qf_f64.v.end());

    for (int t = 0; t < cfg.steps; ++t) {
        // NI-FGSM evaluates the gradient at a lookahead point.
        if (cfg.optimizer == OptimizerKind::nifgsm && cfg.mu != 0.0) {
            std::copy(x.begin(), x.end(), x_eval.begin());
            kernels::axpy(n, static_cast<T>(-cfg.eta * cfg.mu), momentum.data(), x_eval.data());
        } else {
            x_eval = x;
        }

        Graph<T> g;
        ModelForward<T> mf(g, bundle, params);
        Var img = g.input(Mat<T>(1, static_cast<int>(n), x_eval));
        Var enc_seq = mf.encode_image(img);

        Var queries;
        if (need_queries) queries = mf.qformer_queries(mf.patch_embeddings(enc_seq));

        Var qf_term, enc_term;
        if (use_qf_loss) {
            Var patch = mf.patch_embeddings(enc_seq);
            Var e_tar = g.constant(texts.e_tar_qf);
            Var e_clean = g.constant(texts.e_clean_qf);
            Var itc = itc_loss<T>(g, queries, e_tar, e_clean, static_cast<T>(cfg.weights.gamma));
            Var itg = itg_loss<T>(mf, queries, texts.tar_gen, texts.clean_gen,
                                  static_cast<T>(cfg.weights.gamma));
            Var itm = itm_loss<T>(mf, patch, texts.tar_cls, texts.clean_cls,
                                  static_cast<T>(cfg.weights.gamma));
            qf_term = qformer_loss<T>(g, itc, itg, itm);
        }
        if (use_enc_loss) {
            enc_term = encoder_loss<T>(g, mf.global_embedding(enc_seq),
                                       g.constant(texts.e_tar_txt), g.constant(texts.e_clean_txt),
                                       static_cast<T>(cfg.weights.beta));
        }
        Var loss;
        if (use_qf_loss && use_enc_loss) {
            loss = ipga_loss<T>(g, static_cast<T>(alpha), qf_term, enc_term);
        } else if (use_qf_loss) {
            loss = qf_term;
        } else {
            loss = enc_term;
        }

        if (rqa || (cfg.mode == AttackMode::fine_grained && need_queries)) {
            IndexPartition part = topk_semantic_indices(
                g.val(queries).template cast<double>(), e_tar_for_topk, cfg.weights.k);
            if (rqa && lambda > 0.0) {
                Var res_term =
                    residual_loss<T>(g, queries, g.constant(clean_queries), part);
                loss = ipga_r_loss<T>(g, loss, res_term, static_cast<T>(lambda));
            }
            res.partition_trace.push_back(std::move(part));
        }

        double loss_value = static_cast<double>(g.scalar_val(loss));
        if (!std::isfinite(loss_value)) {
            res.aborted = true;
            res.abort_reason = "non-finite loss at iteration " + std::to_string(t);
            break;
        }
        res.loss_trace.push_back(loss_value);

        g.backward(loss);
        const Mat<T>& gi = g.grad(img);
        std::copy(gi.v.begin(), gi.v.end(), grad.begin());

        // Descent step with the sign of the (momentum-accumulated) gradient.
        const T* step_source = grad.data();
        if (cfg.optimizer == OptimizerKind::nifgsm && cfg.mu != 0.0) {
            T l1 = kernels::l1_norm(n, grad.data());
            if (l1 != T(0)) {
                kernels::scale(n, static_cast<T>(cfg.mu), momentum.data(), momentum.data());
                kernels::axpy(n, T(1) / l1, grad.data(), momentum.data());
            }
            step_source = momentum.data();
        }
        kernels::sign_step(n, x.data(), step_source, static_cast<T>(cfg.eta), x.data());
        kernels::clamp_box(n, x.data(), lo.data(), hi.data(), x.data());

        // Feasibility of the iterate, certified against the double-precision
        // clean image.
        for (std::size_t i = 0; i < n; ++i) {
            double xi = static_cast<double>(x[i]);
            if (std::abs(xi - x_clean.v[i]) > cfg.epsilon + 1e-9 || xi < 0.0 || xi > 1.0) {
                all_feasible = false;
                break;
            }
        }
        res.iterations_run = t + 1;
    }

    res.x_adv = Image(x_clean.h, x_clean.w);
    for (std::size_t i = 0; i < n; ++i) res.x_adv.v[i] = static_cast<double>(x[i]);
    res.constraint_ok = all_feasible && linf_distance(res.x_adv, x_clean) <= cfg.epsilon + 1e-9 &&
                        image_in_unit_range(res.x_adv);
    return res;
}

bool forced_f64(const AttackConfig& cfg) {
    // Epsilon below float resolution (or zero) needs double so the feasible
    // box stays exact.
    return cfg.precision == Precision::f64 || cfg.epsilon < 1e-6;
}

} // namespace

AttackResult run_ipga(const Image& x_clean, const std::string& t_tar, const std::string& t_clean,
                      const SurrogateBundle& bundle, const AttackConfig& cfg) {
    if (forced_f64(cfg)) return run_attack_impl<double>(x_clean, t_tar, t_clean, bundle, cfg, false);
    return run_attack_impl<float>(x_clean, t_tar, t_clean, bundle, cfg, false);
}

AttackResult run_ipga_r(const Image& x_clean, const std::string& t_tar,
                        const std::string& t_clean, const SurrogateBundle& bundle,
                        const AttackConfig& cfg) {
    if (forced_f64(cfg)) return run_attack_impl<double>(x_clean, t_tar, t_clean, bundle, cfg, true);
    return run_attack_impl<float>(x_clean, t_tar, t_clean, bundle, cfg, true);
}

} // namespace ipga
