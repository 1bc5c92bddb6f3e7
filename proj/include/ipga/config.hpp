#pragma once

#include "ipga/attack.hpp"
#include "ipga/defense.hpp"
#include "ipga/experiment.hpp"
#include "ipga/pretrain.hpp"
#include "ipga/victim.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipga {

// Distinct failure classes so the CLI can map them to distinct exit codes.
struct SeedCollisionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PrerequisiteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One experiment = one JSON config document. Unknown keys anywhere in the
// document are rejected before any work starts.
struct ExperimentFile {
    // data
    int data_count = 100;
    std::uint64_t data_seed = 5;
    int grid = 2;
    AttackMode mode = AttackMode::fine_grained;

    // surrogate
    std::uint64_t surrogate_seed = 7;
    Dims surrogate_dims;
    PretrainConfig pretrain;
    int corpus_size = 384;
    int heldout_size = 64;

    // victims
    struct VictimSpec {
        std::string name;
        std::uint64_t seed = 0;
        Dims dims;
    };
    std::vector<VictimSpec> victims;

    // evaluation text encoders
    int eval_encoder_count = 3;
    std::uint64_t eval_encoder_seed = 101;
    Dims eval_encoder_dims;

    // victim answer-head training
    VqaTrainConfig vqa;
    int vqa_questions_per_scene = 6;

    // attack
    AttackMethod method = AttackMethod::ipga;
    AttackConfig attack;
    bool alpha_given = false;  // when false, alpha defaults per mode

    DefenseConfig defense;

    std::string out_dir = "out";
    bool export_png = false;
    int workers = 0;

    std::string config_hash;  // FNV-1a of the canonical document

    SceneConfig scene_config() const {
        return SceneConfig{grid, surrogate_dims.img_h, surrogate_dims.img_w};
    }
    // Effective alpha for a mode when the config leaves it unset:
    // 0.25 for global attacks, 1.0 (projector-only) for fine-grained.
    AttackConfig resolved_attack() const;
    void validate() const;
};

// Parse + strict-validate. Throws std::invalid_argument with a path-tagged
// message on any violation.
ExperimentFile load_experiment_file(const std::string& path);
ExperimentFile parse_experiment_json(const std::string& text);

// The default config document (all keys, paper-default values).
std::string default_experiment_json();

} // namespace ipga
