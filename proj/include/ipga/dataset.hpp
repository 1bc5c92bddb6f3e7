#pragma once

#include "ipga/scene.hpp"

#include <string>
#include <vector>

namespace ipga {

struct Dataset {
    SceneConfig scene_cfg;
    AttackMode mode = AttackMode::fine_grained;
    std::uint64_t seed = 0;
    std::vector<AttackInstance> instances;
};

Dataset generate_dataset(int count, std::uint64_t seed, AttackMode mode, const SceneConfig& cfg);

// Two files: <stem>.json (manifest: config, seeds, QA fields, payload
// offsets) and <stem>.f64 (raw little-endian float64 pixels). Pixels
// round-trip exactly.
void export_dataset(const Dataset& ds, const std::string& stem,
                    const std::string& config_hash = "");
Dataset import_dataset(const std::string& stem);

// 8-bit PNGs for eyeballing, one per instance: <dir>/<id>.png.
void export_dataset_pngs(const Dataset& ds, const std::string& dir);

} // namespace ipga
