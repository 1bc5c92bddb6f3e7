#pragma once

#include "ipga/bundle.hpp"
#include "ipga/core.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ipga {

struct PretrainConfig {
    int batch = 16;
    int clip_epochs = 30;   // phase 1: image/text encoder contrastive alignment
    int qf_epochs = 30;     // phase 2: Q-Former ITC + ITG + ITM on the frozen encoder
    double lr = 2e-3;
    double temperature = 0.1;
    bool verbose = false;
};

using CaptionCorpus = std::vector<std::pair<Image, std::string>>;

// Stage-1 pretraining: first aligns the visual and text encoders
// contrastively, then trains the Q-Former with the three stage-1 objectives
// (in-batch best-query/text contrastive, captioning NLL, image-text matching
// with in-batch negatives) on top of the frozen encoder. Deterministic in
// the seed; the returned bundle is frozen.
SurrogateBundle pretrain_stage1(BundleKind kind, const Dims& dims, const Vocabulary& vocab,
                                const CaptionCorpus& corpus, const PretrainConfig& cfg,
                                std::uint64_t seed);

// Contrastive-only training for the toy evaluation text encoders; trains a
// full image/text pair and keeps the text tower.
SurrogateBundle pretrain_text_encoder(const Dims& dims, const Vocabulary& vocab,
                                      const CaptionCorpus& corpus, const PretrainConfig& cfg,
                                      std::uint64_t seed);

// Value-level forward helpers (double precision, no gradients). The
// runtime overloads share one parameter snapshot across calls; the bundle
// overloads build a throwaway snapshot.
template <class T> struct BundleRuntime;
using Runtime = BundleRuntime<double>;

Embedding text_embedding(const Runtime& rt, const std::string& text);
Embedding qformer_text_embedding(const Runtime& rt, const std::string& text);
Mat<double> query_outputs(const Runtime& rt, const Image& x);
Embedding global_image_embedding(const Runtime& rt, const Image& x);
Mat<double> patch_embeddings_value(const Runtime& rt, const Image& x);
double itm_mean_logit_value(const Runtime& rt, const Image& x, const std::string& text);
double itg_nll_value(const Runtime& rt, const Image& x, const std::string& text);

Embedding text_embedding(const SurrogateBundle& b, const std::string& text);
Embedding qformer_text_embedding(const SurrogateBundle& b, const std::string& text);
Mat<double> query_outputs(const SurrogateBundle& b, const Image& x);
Embedding global_image_embedding(const SurrogateBundle& b, const Image& x);
Mat<double> patch_embeddings_value(const SurrogateBundle& b, const Image& x);
double itm_mean_logit_value(const SurrogateBundle& b, const Image& x, const std::string& text);
double itg_nll_value(const SurrogateBundle& b, const Image& x, const std::string& text);

// Caption -> best-matching image by max query cosine; the stage-1 quality
// gate. Returns retrieval accuracy over the held-out pairs.
double retrieval_accuracy(const SurrogateBundle& b, const CaptionCorpus& heldout);

// Fraction of held-out pairs where the matched (image, caption) ITM logit
// beats the logit of a mismatched caption.
double itm_separation(const SurrogateBundle& b, const CaptionCorpus& heldout);

} // namespace ipga
