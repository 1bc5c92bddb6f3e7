#pragma once

#include "ipga/attack.hpp"
#include "ipga/bundle.hpp"
#include "ipga/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ipga {

// The scene attribute language. Color values sit on the RGB cube corners so
// one-step attribute flips stay far apart in pixel space.
const std::vector<std::string>& color_names();
const std::vector<std::string>& shape_names();   // circle square triangle
const std::vector<std::string>& size_names();    // small large
std::array<double, 3> color_rgb(int color);
// Position vocabulary for a grid side (2 -> 4 names, 3 -> 9 names).
std::vector<std::string> position_names(int grid);
std::string position_name(int grid, int cell);

// Answer vocabulary per question type (victim head output order).
std::vector<std::string> answers_for(QuestionType t);

struct CellObject {
    int shape = -1;  // -1 empty, else index into shape_names()
    int color = 0;
    int size = 0;    // index into size_names()
    bool empty() const { return shape < 0; }
    bool operator==(const CellObject&) const = default;
};

struct SceneSpec {
    int grid = 2;
    int background = 0;  // color index
    std::vector<CellObject> cells;  // grid*grid, row-major
    std::uint64_t seed = 0;

    int object_count() const;
    bool operator==(const SceneSpec& o) const {
        return grid == o.grid && background == o.background && cells == o.cells;
    }
};

struct SceneConfig {
    int grid = 2;
    int img_h = 64;
    int img_w = 64;
};

// Deterministic in the seed; the scene always has at least two objects.
SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& cfg);
Image render_scene(const SceneSpec& scene, const SceneConfig& cfg);

// "<bg> background <size> <color> <shape> <pos> ..." in row-major cell order;
// fully describes the scene.
std::string scene_caption(const SceneSpec& scene);
// Inverse of scene_caption (seed is not recoverable). Throws on malformed
// captions.
SceneSpec parse_caption(const std::string& caption, int grid);

// generate_scene = sample + render + caption in one step.
struct GeneratedScene {
    SceneSpec spec;
    Image image;
    std::string caption;
};
GeneratedScene generate_scene(std::uint64_t seed, const SceneConfig& cfg);

struct QAPair {
    QuestionType type = QuestionType::color;
    std::string question;
    std::string answer;
    std::vector<int> region;  // cells the answer depends on
};

// All rule-derivable questions about the scene.
std::vector<QAPair> enumerate_questions(const SceneSpec& scene);

// Recompute the ground-truth answer for a question from the spec.
std::string answer_from_scene(const SceneSpec& scene, const QAPair& q);

struct AttackInstance {
    int id = 0;
    std::uint64_t seed = 0;
    AttackMode mode = AttackMode::fine_grained;
    SceneSpec scene;
    Image x_clean;
    std::string caption;
    QAPair target_qa;
    std::string target_answer_false;
    QAPair unrelated_qa;
    std::string t_tar;    // attack target text (caption or declarative template)
    std::string t_clean;  // clean-side text fed to the attack
};

// Deterministic in (seed, mode). The unrelated question's region never
// overlaps the target's, and the false answer differs from the true one.
AttackInstance make_attack_instance(std::uint64_t seed, AttackMode mode, const SceneConfig& cfg);

// Declarative sentence the projector losses align to in fine-grained mode.
std::string declarative_text(const SceneSpec& scene, const QAPair& qa, const std::string& answer);

} // namespace ipga
