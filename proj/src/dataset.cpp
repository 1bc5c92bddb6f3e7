#include "ipga/dataset.hpp"

#include "ipga/png_io.hpp"
#include "ipga/serialize.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace ipga {

using nlohmann::json;

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

json qa_to_json(const QAPair& q) {
    return json{{"type", question_type_name(q.type)},
                {"question", q.question},
                {"answer", q.answer},
                {"region", q.region}};
}

QAPair qa_from_json(const json& j) {
    QAPair q;
    q.type = question_type_from_name(j.at("type"));
    q.question = j.at("question");
    q.answer = j.at("answer");
    q.region = j.at("region").get<std::vector<int>>();
    return q;
}

json scene_to_json(const SceneSpec& s) {
    json cells = json::array();
    for (const auto& c : s.cells)
        cells.push_back({{"shape", c.shape}, {"color", c.color}, {"size", c.size}});
    return json{{"grid", s.grid}, {"background", s.background}, {"seed", s.seed},
                {"cells", cells}};
}

SceneSpec scene_from_json(const json& j) {
    SceneSpec s;
    s.grid = j.at("grid");
    s.background = j.at("background");
    s.seed = j.at("seed");
    for (const auto& c : j.at("cells")) {
        CellObject o;
        o.shape = c.at("shape");
        o.color = c.at("color");
        o.size = c.at("size");
        s.cells.push_back(o);
    }
    return s;
}

} // namespace

Dataset generate_dataset(int count, std::uint64_t seed, AttackMode mode, const SceneConfig& cfg) {
    if (count <= 0) throw std::invalid_argument("generate_dataset: count must be positive");
    Dataset ds;
    ds.scene_cfg = cfg;
    ds.mode = mode;
    ds.seed = seed;
    ds.instances.reserve(count);
    for (int i = 0; i < count; ++i) {
        AttackInstance inst = make_attack_instance(Rng::mix(seed, 1000003ull * i + 17), mode, cfg);
        inst.id = i;
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

void export_dataset(const Dataset& ds, const std::string& stem, const std::string& config_hash) {
    const std::string manifest_path = stem + ".json";
    const std::string payload_path = stem + ".f64";

    std::ofstream payload(payload_path, std::ios::binary | std::ios::trunc);
    if (!payload) throw std::runtime_error("export_dataset: cannot open " + payload_path);

    json instances = json::array();
    std::uint64_t offset = 0;
    for (const auto& inst : ds.instances) {
        instances.push_back({{"id", inst.id},
                             {"seed", inst.seed},
                             {"mode", attack_mode_name(inst.mode)},
                             {"scene", scene_to_json(inst.scene)},
                             {"caption", inst.caption},
                             {"target_qa", qa_to_json(inst.target_qa)},
                             {"target_answer_false", inst.target_answer_false},
                             {"unrelated_qa", qa_to_json(inst.unrelated_qa)},
                             {"t_tar", inst.t_tar},
                             {"t_clean", inst.t_clean},
                             {"offset", offset}});
        payload.write(reinterpret_cast<const char*>(inst.x_clean.v.data()),
                      static_cast<std::streamsize>(inst.x_clean.size() * sizeof(double)));
        offset += inst.x_clean.size() * sizeof(double);
    }
    if (!payload) throw std::runtime_error("export_dataset: payload write failed");
    payload.close();

    json manifest{{"format", "ipga-dataset"},
                  {"version", kDatasetVersion},
                  {"seed", ds.seed},
                  {"mode", attack_mode_name(ds.mode)},
                  {"grid", ds.scene_cfg.grid},
                  {"img_h", ds.scene_cfg.img_h},
                  {"img_w", ds.scene_cfg.img_w},
                  {"count", ds.instances.size()},
                  {"payload", std::filesystem::path(payload_path).filename().string()},
                  {"config_hash", config_hash},
                  {"tool_version", kToolVersion},
                  {"instances", instances}};
    std::ofstream mf(manifest_path, std::ios::trunc);
    if (!mf) throw std::runtime_error("export_dataset: cannot open " + manifest_path);
    mf << manifest.dump(1) << '\n';
    if (!mf) throw std::runtime_error("export_dataset: manifest write failed");
}

Dataset import_dataset(const std::string& stem) {
    const std::string manifest_path = stem + ".json";
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("import_dataset: cannot open " + manifest_path);
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("import_dataset: corrupt manifest " + manifest_path + ": " +
                                 e.what());
    }
    if (manifest.value("format", "") != "ipga-dataset")
        throw std::runtime_error("import_dataset: " + manifest_path + " is not a dataset manifest");
    if (manifest.at("version").get<std::uint32_t>() != kDatasetVersion)
        throw std::runtime_error("import_dataset: unsupported dataset version in " + manifest_path);

    Dataset ds;
    ds.seed = manifest.at("seed");
    ds.mode = attack_mode_from_name(manifest.at("mode"));
    ds.scene_cfg.grid = manifest.at("grid");
    ds.scene_cfg.img_h = manifest.at("img_h");
    ds.scene_cfg.img_w = manifest.at("img_w");

    const std::string payload_path =
        (std::filesystem::path(manifest_path).parent_path() /
         manifest.at("payload").get<std::string>())
            .string();
    std::ifstream payload(payload_path, std::ios::binary);
    if (!payload) throw std::runtime_error("import_dataset: cannot open " + payload_path);

    const std::size_t pixels = 3u * ds.scene_cfg.img_h * ds.scene_cfg.img_w;
    for (const auto& j : manifest.at("instances")) {
        AttackInstance inst;
        inst.id = j.at("id");
        inst.seed = j.at("seed");
        inst.mode = attack_mode_from_name(j.at("mode"));
        inst.scene = scene_from_json(j.at("scene"));
        inst.caption = j.at("caption");
        inst.target_qa = qa_from_json(j.at("target_qa"));
        inst.target_answer_false = j.at("target_answer_false");
        inst.unrelated_qa = qa_from_json(j.at("unrelated_qa"));
        inst.t_tar = j.at("t_tar");
        inst.t_clean = j.at("t_clean");
        inst.x_clean = Image(ds.scene_cfg.img_h, ds.scene_cfg.img_w);
        payload.seekg(static_cast<std::streamoff>(j.at("offset").get<std::uint64_t>()));
        payload.read(reinterpret_cast<char*>(inst.x_clean.v.data()),
                     static_cast<std::streamsize>(pixels * sizeof(double)));
        if (!payload)
            throw std::runtime_error("import_dataset: truncated payload for instance " +
                                     std::to_string(inst.id));
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

void export_dataset_pngs(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& inst : ds.instances) {
        write_png(inst.x_clean,
                  (std::filesystem::path(dir) / (std::to_string(inst.id) + ".png")).string());
    }
}

} // namespace ipga
