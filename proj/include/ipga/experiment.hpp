#pragma once

#include "ipga/attack.hpp"
#include "ipga/dataset.hpp"
#include "ipga/defense.hpp"
#include "ipga/metrics.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ipga {

// Attack method column of the comparison table. encoder_only is the pure
// encoder-level alignment baseline (alpha forced to 0).
enum class AttackMethod { ipga, ipga_r, encoder_only };
const char* attack_method_name(AttackMethod m);
AttackMethod attack_method_from_name(const std::string& s);

// Resolves the method's loss-weight conventions onto a base config:
// encoder_only forces alpha = 0; ipga/ipga_r keep the config's alpha.
AttackConfig resolve_method_config(AttackMethod m, AttackConfig cfg);

struct VictimRef {
    std::string name;
    const SurrogateBundle* bundle = nullptr;
};

struct Aggregates {
    double asr = 0.0;
    double clean_acc = 0.0;
    double ensemble_mean = 0.0;          // global mode only
    double mean_residual_deviation = -1.0;
    int n_records = 0;
};

struct EvalReport {
    std::string method;
    std::string defense_tag = "none";
    AttackMode mode = AttackMode::fine_grained;
    std::uint64_t dataset_seed = 0;
    std::uint64_t attack_seed = 0;
    int instances_total = 0;
    int instances_filtered = 0;    // survived the clean-correctness filter
    int attacks_aborted = 0;
    double mean_s_tar_clean = 0.0;
    double mean_s_tar_adv = 0.0;
    std::map<std::string, Aggregates> per_victim;
    std::vector<InstanceRecord> records;

    Aggregates overall() const;
};

struct AdversarialBatch {
    std::string method;
    std::vector<int> instance_ids;       // filtered instance ids, ascending
    std::vector<AttackResult> results;   // aligned with instance_ids
};

// The clean-correctness filter: ids of instances every victim answers
// correctly (target and unrelated questions) on the clean image. In global
// mode no filter applies and all ids pass.
std::vector<int> clean_filter(const Dataset& ds, const std::vector<VictimRef>& victims);

// Attacks every instance in `ids` on the surrogate (parallel over
// instances; workers <= 0 means hardware concurrency).
AdversarialBatch attack_instances(const Dataset& ds, const std::vector<int>& ids,
                                  AttackMethod method, const AttackConfig& cfg,
                                  const SurrogateBundle& surrogate, int workers);

// Black-box evaluation of a finished batch against the victims, with an
// optional preprocessing defense in front of victim inference.
EvalReport evaluate_batch(const Dataset& ds, const AdversarialBatch& batch,
                          const AttackConfig& cfg, const SurrogateBundle& surrogate,
                          const std::vector<VictimRef>& victims,
                          const std::vector<SurrogateBundle>& eval_encoders,
                          const DefenseConfig& defense, int workers);

// filter -> attack -> evaluate in one call.
EvalReport run_transfer_experiment(const Dataset& ds, AttackMethod method,
                                   const AttackConfig& cfg, const SurrogateBundle& surrogate,
                                   const std::vector<VictimRef>& victims,
                                   const std::vector<SurrogateBundle>& eval_encoders,
                                   const DefenseConfig& defense, int workers);

// Structured-text + CSV serialization ("aggregates recomputable from
// records" holds: the loader re-derives and checks them).
void save_report(const EvalReport& r, const std::string& json_path, const std::string& csv_path,
                 const std::string& config_hash);
EvalReport load_report(const std::string& json_path);

} // namespace ipga
