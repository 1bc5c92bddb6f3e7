#include "ipga/metrics.hpp"

#include "ipga/core.hpp"
#include "ipga/pretrain.hpp"

#include <cmath>
#include <stdexcept>

namespace ipga {

double asr(const std::vector<InstanceRecord>& records) {
    if (records.empty()) throw std::invalid_argument("asr: empty record set");
    int hits = 0;
    for (const auto& r : records)
        if (!r.attack_aborted && r.pred_target_adv == r.target_false) ++hits;
    return static_cast<double>(hits) / records.size();
}

double clean_acc(const std::vector<InstanceRecord>& records) {
    if (records.empty()) throw std::invalid_argument("clean_acc: empty record set");
    int hits = 0;
    for (const auto& r : records)
        if (!r.attack_aborted && r.pred_unrelated_adv == r.unrelated_truth) ++hits;
    return static_cast<double>(hits) / records.size();
}

EnsembleScore ensemble_similarity(const std::string& caption, const std::string& target,
                                  const std::vector<SurrogateBundle>& encoders) {
    if (encoders.empty()) throw std::invalid_argument("ensemble_similarity: need >= 1 encoder");
    EnsembleScore out;
    double sum = 0.0;
    for (const auto& enc : encoders) {
        double s = cosine_similarity(text_embedding(enc, caption), text_embedding(enc, target));
        out.per_encoder.push_back(s);
        sum += s;
    }
    out.mean = sum / encoders.size();
    return out;
}

double sign_test_p(int wins, int losses) {
    const int n = wins + losses;
    if (n == 0) return 1.0;
    const int k = std::max(wins, losses);
    // two-sided tail of Binomial(n, 1/2): 2 * P[X >= k], capped at 1
    double tail = 0.0;
    for (int i = k; i <= n; ++i) {
        double logc = std::lgamma(n + 1) - std::lgamma(i + 1) - std::lgamma(n - i + 1);
        tail += std::exp(logc - n * std::log(2.0));
    }
    return std::min(1.0, 2.0 * tail);
}

} // namespace ipga
