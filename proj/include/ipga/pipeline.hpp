#pragma once

#include "ipga/config.hpp"
#include "ipga/dataset.hpp"

#include <map>
#include <string>
#include <vector>

namespace ipga {

// File layout under the experiment output directory. Every artifact embeds
// the config hash; evaluation reports also embed it (and the seed) in the
// file name.
struct PipelinePaths {
    std::string root;

    std::string bundles_dir() const { return root + "/bundles"; }
    std::string surrogate_path() const { return bundles_dir() + "/surrogate.ipgb"; }
    std::string victim_path(const std::string& name) const {
        return bundles_dir() + "/" + name + ".ipgb";
    }
    std::string encoder_path(int i) const {
        return bundles_dir() + "/enc" + std::to_string(i) + ".ipgb";
    }
    std::string pretrain_summary_path() const { return bundles_dir() + "/pretrain_summary.json"; }

    std::string data_dir() const { return root + "/data"; }
    std::string dataset_stem() const { return data_dir() + "/dataset"; }
    std::string png_dir() const { return data_dir() + "/png"; }

    std::string attacks_dir(const std::string& method) const {
        return root + "/attacks/" + method;
    }
    std::string results_path(const std::string& method) const {
        return attacks_dir(method) + "/results.json";
    }
    std::string adv_payload_path(const std::string& method) const {
        return attacks_dir(method) + "/adv.f64";
    }
    std::string adv_png_dir(const std::string& method) const {
        return attacks_dir(method) + "/png";
    }

    std::string eval_dir() const { return root + "/eval"; }
    std::string eval_stem(const std::string& method, const std::string& defense_tag,
                          const std::string& hash, std::uint64_t seed) const {
        return eval_dir() + "/eval_" + method + "_" + defense_tag + "_" + hash.substr(0, 8) +
               "_s" + std::to_string(seed);
    }

    std::string report_dir() const { return root + "/report"; }
};

struct SceneCorpus {
    std::vector<GeneratedScene> scenes;
    CaptionCorpus pairs;  // (image, caption) view of the scenes
};

// Deterministic training corpus, held-out pairs, and VQA samples derived
// from the config's data seed (streams independent of the eval instances).
SceneCorpus build_corpus(const ExperimentFile& f, int count, std::uint64_t stream);
std::vector<VqaSample> build_vqa_samples(const ExperimentFile& f, const SceneCorpus& corpus);

struct PretrainSummary {
    double surrogate_retrieval = 0.0;
    double surrogate_itm_separation = 0.0;
    std::map<std::string, double> victim_vqa_acc;      // on held-out questions
    std::map<std::string, double> victim_caption_parse;  // held-out caption parse rate
};

// pretrain -> bundle files (surrogate, victims with answer heads, eval
// text encoders) plus a summary of the training-quality gates.
PretrainSummary cmd_pretrain(const ExperimentFile& f);

void cmd_gendata(const ExperimentFile& f);

// Attacks every dataset instance with one method; stores exact adversarial
// images and per-instance traces.
void cmd_attack(const ExperimentFile& f, AttackMethod method);

// Applies the clean-correctness filter, evaluates stored adversarial
// images on the victims (optionally behind a defense), writes the report,
// and returns its JSON path.
std::string cmd_evaluate(const ExperimentFile& f, AttackMethod method,
                         const DefenseConfig& defense);

// Consolidated method x metric table from evaluation reports.
void cmd_report(const std::vector<std::string>& report_paths, const std::string& out_json,
                const std::string& out_csv);

// Attack artifact round-trip (results.json + adv.f64).
void save_attack_batch(const AdversarialBatch& batch, const Dataset& ds,
                       const std::string& results_path, const std::string& payload_path,
                       const std::string& config_hash);
AdversarialBatch load_attack_batch(const std::string& results_path,
                                   const std::string& payload_path, const Dataset& ds);

// Bundle loading with the prerequisite-error contract.
SurrogateBundle load_bundle_checked(const std::string& path);

} // namespace ipga
