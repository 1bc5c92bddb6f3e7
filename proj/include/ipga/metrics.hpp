#pragma once

#include "ipga/bundle.hpp"

#include <string>
#include <vector>

namespace ipga {

// One (instance, victim) evaluation row.
struct InstanceRecord {
    int instance_id = 0;
    std::string victim;
    bool attack_aborted = false;

    // fine-grained VQA fields
    std::string target_false;         // adversarial goal
    std::string pred_target_adv;      // victim's answer on the adversarial image
    std::string unrelated_truth;      // ground truth of the unrelated question
    std::string pred_unrelated_adv;

    // global captioning fields
    std::string caption_adv;
    std::vector<double> caption_sims;  // one per evaluation encoder
    double caption_sim_mean = 0.0;

    // surrogate-side diagnostics
    double s_tar_clean = 0.0;
    double s_tar_adv = 0.0;
    double residual_deviation = -1.0;  // sum over final residual rows, -1 if n/a
};

// Fraction of records whose adversarial prediction equals the target answer.
// Throws on an empty record set.
double asr(const std::vector<InstanceRecord>& records);

// Fraction of records whose unrelated question is still answered correctly
// on the adversarial image.
double clean_acc(const std::vector<InstanceRecord>& records);

struct EnsembleScore {
    std::vector<double> per_encoder;
    double mean = 0.0;
};

// Cosine similarity between the caption and the target under each
// evaluation text encoder, plus the arithmetic mean.
EnsembleScore ensemble_similarity(const std::string& caption, const std::string& target,
                                  const std::vector<SurrogateBundle>& encoders);

// Two-sided paired sign test: p-value for `wins` successes out of
// `wins + losses` discordant pairs under a fair coin.
double sign_test_p(int wins, int losses);

} // namespace ipga
