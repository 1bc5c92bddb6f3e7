#pragma once

#include "ipga/mat.hpp"
#include "ipga/rng.hpp"
#include "ipga/vocab.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace ipga {

// Architecture hyperparameters shared by surrogate and victim models.
struct Dims {
    int img_h = 64;
    int img_w = 64;
    int patch = 8;
    int d = 32;           // model width, also the embedding dimension
    int n_heads = 4;
    int n_queries = 8;
    int enc_layers = 2;   // visual encoder depth
    int txt_layers = 2;   // text encoder depth
    int qf_layers = 2;    // shared self-attention + cross-attention blocks
    int mlp_mult = 4;
    int max_text_len = 24;

    int patches_x() const { return img_w / patch; }
    int patches_y() const { return img_h / patch; }
    int num_patches() const { return patches_x() * patches_y(); }
    int patch_dim() const { return 3 * patch * patch; }
    int head_dim() const { return d / n_heads; }

    void validate() const;
    bool operator==(const Dims&) const = default;
};

enum class BundleKind { surrogate, victim, text_encoder };

const char* bundle_kind_name(BundleKind k);
BundleKind bundle_kind_from_name(const std::string& s);

// Named parameter matrices in deterministic (lexicographic) order.
using ParamStore = std::map<std::string, Mat<double>>;

// Question types a victim can answer; also used by the data generator.
enum class QuestionType { color, shape, existence, position };
const char* question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& s);

// Frozen model stack: visual encoder g_phi, text encoder g_psi, stage-1
// Q-Former (image transformer + text transformer with shared
// self-attention, ITM head, LM head). Victim bundles additionally carry
// per-question-type answer heads.
struct SurrogateBundle {
    BundleKind kind = BundleKind::surrogate;
    Dims dims;
    Vocabulary vocab;
    ParamStore params;

    std::uint64_t param_checksum() const;
    const Mat<double>& param(const std::string& name) const;
    bool has_param(const std::string& name) const { return params.count(name) != 0; }
};

// Fresh random-initialized bundle (weights N(0, 0.02), layer norms at
// identity). Deterministic in the seed.
SurrogateBundle make_bundle(BundleKind kind, const Dims& dims, const Vocabulary& vocab,
                            std::uint64_t seed);

// Typed snapshot for running the forward pass in float or double.
template <class T>
using TypedParams = std::map<std::string, Mat<T>>;

template <class T>
TypedParams<T> typed_params(const ParamStore& p) {
    TypedParams<T> out;
    for (const auto& [k, m] : p) out.emplace(k, m.template cast<T>());
    return out;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);

} // namespace ipga
