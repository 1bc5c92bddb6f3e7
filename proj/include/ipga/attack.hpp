#pragma once

#include "ipga/bundle.hpp"
#include "ipga/core.hpp"
#include "ipga/losses.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ipga {

enum class OptimizerKind { vanilla_ifgsm, nifgsm };
enum class AttackMode { global, fine_grained };
enum class Precision { f32, f64 };

const char* optimizer_kind_name(OptimizerKind k);
OptimizerKind optimizer_kind_from_name(const std::string& s);
const char* attack_mode_name(AttackMode m);
AttackMode attack_mode_from_name(const std::string& s);
const char* precision_name(Precision p);
Precision precision_from_name(const std::string& s);

struct AttackConfig {
    double epsilon = 8.0 / 255.0;
    double eta = 1.0 / 255.0;
    int steps = 200;
    LossWeights weights;
    OptimizerKind optimizer = OptimizerKind::nifgsm;
    double mu = 1.0;             // momentum decay
    std::uint64_t seed = 0;
    AttackMode mode = AttackMode::fine_grained;
    Precision precision = Precision::f32;  // tests run f64; attacks default f32
    bool quiet = false;          // suppress advisory warnings

    void validate(int n_queries, bool rqa) const;
};

struct AttackResult {
    Image x_adv;
    std::vector<double> loss_trace;                 // one entry per iteration run
    std::vector<IndexPartition> partition_trace;    // fine-grained runs with query extraction
    bool constraint_ok = false;
    int iterations_run = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Texts are whitespace-joined words from the bundle vocabulary.
AttackResult run_ipga(const Image& x_clean, const std::string& t_tar, const std::string& t_clean,
                      const SurrogateBundle& bundle, const AttackConfig& cfg);

AttackResult run_ipga_r(const Image& x_clean, const std::string& t_tar,
                        const std::string& t_clean, const SurrogateBundle& bundle,
                        const AttackConfig& cfg);

// One momentum step: momentum <- mu * momentum + grad / ||grad||_1 and
// direction = sign(momentum). A zero gradient leaves the momentum unchanged
// and returns a zero direction. mu == 0 short-circuits to the plain
// sign-gradient direction so it reproduces vanilla I-FGSM bitwise.
void nifgsm_update(std::vector<double>& momentum, const std::vector<double>& grad, double mu,
                   std::vector<double>& direction);

// Where NI-FGSM evaluates the gradient: x - eta * mu * momentum.
std::vector<double> nifgsm_lookahead(const std::vector<double>& x,
                                     const std::vector<double>& momentum, double mu, double eta);

} // namespace ipga
