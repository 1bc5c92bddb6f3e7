#pragma once

#include "ipga/pretrain.hpp"
#include "ipga/scene.hpp"

#include <string>
#include <vector>

namespace ipga {

struct VqaTrainConfig {
    int epochs = 60;
    int batch = 64;
    double lr = 3e-3;
    bool verbose = false;
};

struct VqaSample {
    Image image;
    QAPair qa;
};

// Trains the per-question-type answer heads of a victim bundle. The
// backbone stays frozen; conditioned query features are cached once per
// sample. Deterministic in the seed.
void train_victim_heads(SurrogateBundle& victim, const std::vector<VqaSample>& samples,
                        const VqaTrainConfig& cfg, std::uint64_t seed);

// Argmax over the question type's answer vocabulary. Deterministic.
std::string victim_answer(const Runtime& rt, const Image& x, const QAPair& question);
std::string victim_answer(const SurrogateBundle& victim, const Image& x, const QAPair& question);

// Greedy decode until [EOS] or the bundle's max text length.
std::vector<int> victim_caption_ids(const Runtime& rt, const Image& x);
std::string victim_caption(const Runtime& rt, const Image& x);
std::string victim_caption(const SurrogateBundle& victim, const Image& x);

double victim_vqa_accuracy(const SurrogateBundle& victim, const std::vector<VqaSample>& samples);

} // namespace ipga
