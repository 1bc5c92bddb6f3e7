#include "ipga/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ipga {

const std::vector<std::string>& color_names() {
    static const std::vector<std::string> v = {"black", "red",     "green", "blue",
                                               "yellow", "magenta", "cyan",  "white"};
    return v;
}

const std::vector<std::string>& shape_names() {
    static const std::vector<std::string> v = {"circle", "square", "triangle"};
    return v;
}

const std::vector<std::string>& size_names() {
    static const std::vector<std::string> v = {"small", "large"};
    return v;
}

std::array<double, 3> color_rgb(int color) {
    switch (color) {
    case 0: return {0.0, 0.0, 0.0};  // black
    case 1: return {1.0, 0.0, 0.0};  // red
    case 2: return {0.0, 1.0, 0.0};  // green
    case 3: return {0.0, 0.0, 1.0};  // blue
    case 4: return {1.0, 1.0, 0.0};  // yellow
    case 5: return {1.0, 0.0, 1.0};  // magenta
    case 6: return {0.0, 1.0, 1.0};  // cyan
    case 7: return {1.0, 1.0, 1.0};  // white
    }
    throw std::invalid_argument("color index out of range");
}

std::vector<std::string> position_names(int grid) {
    if (grid == 2) return {"top_left", "top_right", "bottom_left", "bottom_right"};
    if (grid == 3)
        return {"top_left",    "top_center",    "top_right",   "middle_left", "center",
                "middle_right", "bottom_left",   "bottom_center", "bottom_right"};
    throw std::invalid_argument("grid must be 2 or 3");
}

std::string position_name(int grid, int cell) {
    auto names = position_names(grid);
    if (cell < 0 || cell >= static_cast<int>(names.size()))
        throw std::invalid_argument("cell index out of range");
    return names[cell];
}

std::vector<std::string> answers_for(QuestionType t) {
    switch (t) {
    case QuestionType::color: return color_names();
    case QuestionType::shape: return shape_names();
    case QuestionType::existence: return {"yes", "no"};
    case QuestionType::position: return position_names(3);  // superset of both grids
    }
    throw std::invalid_argument("bad question type");
}

int SceneSpec::object_count() const {
    int n = 0;
    for (const auto& c : cells)
        if (!c.empty()) ++n;
    return n;
}

SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& cfg) {
    if (cfg.grid != 2 && cfg.grid != 3) throw std::invalid_argument("grid must be 2 or 3");
    Rng rng(Rng::mix(seed, 0x5ce9e5u));
    SceneSpec s;
    s.grid = cfg.grid;
    s.seed = seed;
    s.background = rng.uniform_int(8);
    const int ncells = cfg.grid * cfg.grid;
    s.cells.assign(ncells, CellObject{});

    int nobj = 2 + rng.uniform_int(ncells - 1);  // 2 .. ncells
    std::vector<int> order(ncells);
    for (int i = 0; i < ncells; ++i) order[i] = i;
    for (int i = ncells - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);

    for (int k = 0; k < nobj; ++k) {
        CellObject o;
        o.shape = rng.uniform_int(3);
        o.size = rng.uniform_int(2);
        int c = rng.uniform_int(7);
        o.color = (c >= s.background) ? c + 1 : c;  // never the background color
        s.cells[order[k]] = o;
    }
    return s;
}

Image render_scene(const SceneSpec& scene, const SceneConfig& cfg) {
    Image img(cfg.img_h, cfg.img_w);
    auto bg = color_rgb(scene.background);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < cfg.img_h; ++y)
            for (int x = 0; x < cfg.img_w; ++x) img.at(ch, y, x) = bg[ch];

    const int g = scene.grid;
    const double cell_h = static_cast<double>(cfg.img_h) / g;
    const double cell_w = static_cast<double>(cfg.img_w) / g;
    for (int cell = 0; cell < g * g; ++cell) {
        const CellObject& o = scene.cells[cell];
        if (o.empty()) continue;
        const int gy = cell / g, gx = cell % g;
        const double cy = gy * cell_h + cell_h / 2.0;
        const double cx = gx * cell_w + cell_w / 2.0;
        const double r = (o.size == 0 ? 0.25 : 0.40) * std::min(cell_h, cell_w);
        auto rgb = color_rgb(o.color);

        const int y0 = static_cast<int>(gy * cell_h), y1 = static_cast<int>((gy + 1) * cell_h);
        const int x0 = static_cast<int>(gx * cell_w), x1 = static_cast<int>((gx + 1) * cell_w);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const double dy = (y + 0.5) - cy;
                const double dx = (x + 0.5) - cx;
                bool inside = false;
                switch (o.shape) {
                case 0: inside = dy * dy + dx * dx <= r * r; break;
                case 1: inside = std::abs(dy) <= r && std::abs(dx) <= r; break;
                case 2: inside = dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0; break;
                }
                if (inside)
                    for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = rgb[ch];
            }
        }
    }
    return img;
}

std::string scene_caption(const SceneSpec& scene) {
    std::ostringstream os;
    os << color_names()[scene.background] << " background";
    for (int cell = 0; cell < static_cast<int>(scene.cells.size()); ++cell) {
        const CellObject& o = scene.cells[cell];
        if (o.empty()) continue;
        os << ' ' << size_names()[o.size] << ' ' << color_names()[o.color] << ' '
           << shape_names()[o.shape] << ' ' << position_name(scene.grid, cell);
    }
    return os.str();
}

namespace {

int index_of(const std::vector<std::string>& names, const std::string& w, const char* what) {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == w) return static_cast<int>(i);
    throw std::invalid_argument(std::string("caption parse: bad ") + what + " '" + w + "'");
}

} // namespace

SceneSpec parse_caption(const std::string& caption, int grid) {
    std::istringstream is(caption);
    std::vector<std::string> w;
    std::string tok;
    while (is >> tok) w.push_back(tok);
    if (w.size() < 2 || w[1] != "background")
        throw std::invalid_argument("caption parse: expected '<color> background' prefix");
    if ((w.size() - 2) % 4 != 0)
        throw std::invalid_argument("caption parse: truncated object description");
    SceneSpec s;
    s.grid = grid;
    s.background = index_of(color_names(), w[0], "background color");
    s.cells.assign(grid * grid, CellObject{});
    auto positions = position_names(grid);
    for (std::size_t i = 2; i + 3 < w.size(); i += 4) {
        CellObject o;
        o.size = index_of(size_names(), w[i], "size");
        o.color = index_of(color_names(), w[i + 1], "color");
        o.shape = index_of(shape_names(), w[i + 2], "shape");
        int cell = index_of(positions, w[i + 3], "position");
        if (!s.cells[cell].empty())
            throw std::invalid_argument("caption parse: duplicate cell description");
        s.cells[cell] = o;
    }
    return s;
}

GeneratedScene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
    GeneratedScene out;
    out.spec = sample_scene(seed, cfg);
    out.image = render_scene(out.spec, cfg);
    out.caption = scene_caption(out.spec);
    return out;
}

std::vector<QAPair> enumerate_questions(const SceneSpec& scene) {
    std::vector<QAPair> out;
    const int g = scene.grid;
    const int ncells = g * g;

    for (int cell = 0; cell < ncells; ++cell) {
        const CellObject& o = scene.cells[cell];
        std::string pos = position_name(g, cell);
        if (!o.empty()) {
            out.push_back({QuestionType::color, "what color is the shape at " + pos,
                           color_names()[o.color], {cell}});
            out.push_back({QuestionType::shape, "what shape is at " + pos,
                           shape_names()[o.shape], {cell}});
        }
        for (int sh = 0; sh < 3; ++sh) {
            bool present = !o.empty() && o.shape == sh;
            out.push_back({QuestionType::existence,
                           "is there a " + shape_names()[sh] + " at " + pos,
                           present ? "yes" : "no",
                           {cell}});
        }
    }

    // Position questions need a unique (color, shape) pair.
    for (int cell = 0; cell < ncells; ++cell) {
        const CellObject& o = scene.cells[cell];
        if (o.empty()) continue;
        int count = 0;
        for (const auto& c : scene.cells)
            if (!c.empty() && c.color == o.color && c.shape == o.shape) ++count;
        if (count == 1) {
            out.push_back({QuestionType::position,
                           "where is the " + color_names()[o.color] + " " +
                               shape_names()[o.shape],
                           position_name(g, cell),
                           {cell}});
        }
    }
    return out;
}

std::string answer_from_scene(const SceneSpec& scene, const QAPair& q) {
    std::istringstream is(q.question);
    std::vector<std::string> w;
    std::string tok;
    while (is >> tok) w.push_back(tok);
    auto positions = position_names(scene.grid);
    switch (q.type) {
    case QuestionType::color: {
        // what color is the shape at <pos>
        int cell = index_of(positions, w.back(), "position");
        if (scene.cells[cell].empty()) return "no";  // degenerate; callers avoid it
        return color_names()[scene.cells[cell].color];
    }
    case QuestionType::shape: {
        int cell = index_of(positions, w.back(), "position");
        if (scene.cells[cell].empty()) return "no";
        return shape_names()[scene.cells[cell].shape];
    }
    case QuestionType::existence: {
        // is there a <shape> at <pos>
        int sh = index_of(shape_names(), w[3], "shape");
        int cell = index_of(positions, w.back(), "position");
        const CellObject& o = scene.cells[cell];
        return (!o.empty() && o.shape == sh) ? "yes" : "no";
    }
    case QuestionType::position: {
        // where is the <color> <shape>
        int col = index_of(color_names(), w[3], "color");
        int sh = index_of(shape_names(), w[4], "shape");
        for (int cell = 0; cell < static_cast<int>(scene.cells.size()); ++cell) {
            const CellObject& o = scene.cells[cell];
            if (!o.empty() && o.color == col && o.shape == sh)
                return position_name(scene.grid, cell);
        }
        return "no";
    }
    }
    throw std::logic_error("bad question type");
}

std::string declarative_text(const SceneSpec& scene, const QAPair& qa, const std::string& answer) {
    std::istringstream is(qa.question);
    std::vector<std::string> w;
    std::string tok;
    while (is >> tok) w.push_back(tok);
    switch (qa.type) {
    case QuestionType::color: {
        int cell = qa.region.at(0);
        const CellObject& o = scene.cells[cell];
        return "the color of the " + shape_names()[o.shape] + " at " +
               position_name(scene.grid, cell) + " is " + answer;
    }
    case QuestionType::shape: {
        int cell = qa.region.at(0);
        return "the shape at " + position_name(scene.grid, cell) + " is " + answer;
    }
    case QuestionType::existence: {
        const std::string& shape = w[3];
        const std::string& pos = w.back();
        if (answer == "yes") return "there is a " + shape + " at " + pos;
        return "there is no " + shape + " at " + pos;
    }
    case QuestionType::position: {
        const std::string& color = w[3];
        const std::string& shape = w[4];
        return "the " + color + " " + shape + " is at " + answer;
    }
    }
    throw std::logic_error("bad question type");
}

namespace {

std::string sample_false_answer(const QAPair& qa, Rng& rng) {
    std::vector<std::string> domain;
    switch (qa.type) {
    case QuestionType::color: domain = color_names(); break;
    case QuestionType::shape: domain = shape_names(); break;
    case QuestionType::existence: return qa.answer == "yes" ? "no" : "yes";
    case QuestionType::position: {
        // false positions stay within the instance's grid
        break;
    }
    }
    if (qa.type == QuestionType::position) return "";  // handled by caller (needs grid)
    domain.erase(std::remove(domain.begin(), domain.end(), qa.answer), domain.end());
    return domain[rng.uniform_int(static_cast<int>(domain.size()))];
}

bool disjoint(const std::vector<int>& a, const std::vector<int>& b) {
    for (int x : a)
        for (int y : b)
            if (x == y) return false;
    return true;
}

} // namespace

AttackInstance make_attack_instance(std::uint64_t seed, AttackMode mode, const SceneConfig& cfg) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        std::uint64_t scene_seed = Rng::mix(seed, 0xa11ce + attempt);
        GeneratedScene gs = generate_scene(scene_seed, cfg);
        auto questions = enumerate_questions(gs.spec);
        Rng rng(Rng::mix(seed, 0x9a7a + attempt));

        int ti = rng.uniform_int(static_cast<int>(questions.size()));
        const QAPair& target = questions[ti];

        std::vector<int> unrelated_candidates;
        for (int i = 0; i < static_cast<int>(questions.size()); ++i) {
            if (i == ti) continue;
            if (disjoint(questions[i].region, target.region))
                unrelated_candidates.push_back(i);
        }
        if (unrelated_candidates.empty()) continue;  // resample the scene
        const QAPair& unrelated =
            questions[unrelated_candidates[rng.uniform_int(
                static_cast<int>(unrelated_candidates.size()))]];

        AttackInstance inst;
        inst.seed = seed;
        inst.mode = mode;
        inst.scene = gs.spec;
        inst.x_clean = std::move(gs.image);
        inst.caption = gs.caption;
        inst.target_qa = target;
        inst.unrelated_qa = unrelated;

        if (target.type == QuestionType::position) {
            auto domain = position_names(gs.spec.grid);
            domain.erase(std::remove(domain.begin(), domain.end(), target.answer), domain.end());
            inst.target_answer_false = domain[rng.uniform_int(static_cast<int>(domain.size()))];
        } else {
            inst.target_answer_false = sample_false_answer(target, rng);
        }

        if (mode == AttackMode::global) {
            // Target caption comes from an independently sampled scene.
            std::string other;
            for (std::uint64_t k = 0; k < 16; ++k) {
                other = scene_caption(
                    sample_scene(Rng::mix(seed, 0x7a96e7 + 31 * k + attempt), cfg));
                if (other != inst.caption) break;
            }
            inst.t_tar = other;
            inst.t_clean = inst.caption;
        } else {
            inst.t_tar = declarative_text(gs.spec, target, inst.target_answer_false);
            inst.t_clean = declarative_text(gs.spec, target, target.answer);
        }
        return inst;
    }
    throw std::runtime_error("make_attack_instance: could not build a disjoint QA pair");
}

} // namespace ipga
