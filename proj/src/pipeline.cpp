#include "ipga/pipeline.hpp"

#include "ipga/parallel.hpp"
#include "ipga/png_io.hpp"
#include "ipga/serialize.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace ipga {

using nlohmann::json;
namespace fs = std::filesystem;

SceneCorpus build_corpus(const ExperimentFile& f, int count, std::uint64_t stream) {
    SceneCorpus out;
    SceneConfig scfg = f.scene_config();
    out.scenes.reserve(count);
    for (int i = 0; i < count; ++i) {
        std::uint64_t seed = Rng::mix(f.data_seed, stream + 7919ull * i);
        out.scenes.push_back(generate_scene(seed, scfg));
        out.pairs.emplace_back(out.scenes.back().image, out.scenes.back().caption);
    }
    return out;
}

std::vector<VqaSample> build_vqa_samples(const ExperimentFile& f, const SceneCorpus& corpus) {
    std::vector<VqaSample> samples;
    Rng rng(Rng::mix(f.data_seed, 0x59a0));
    for (const auto& gs : corpus.scenes) {
        auto qs = enumerate_questions(gs.spec);
        for (int i = static_cast<int>(qs.size()) - 1; i > 0; --i)
            std::swap(qs[i], qs[rng.uniform_int(i + 1)]);
        int take = std::min<int>(f.vqa_questions_per_scene, static_cast<int>(qs.size()));
        for (int i = 0; i < take; ++i) samples.push_back({gs.image, qs[i]});
    }
    return samples;
}

SurrogateBundle load_bundle_checked(const std::string& path) {
    if (!fs::exists(path))
        throw PrerequisiteError("missing bundle file " + path + " (run `ipga pretrain` first)");
    return load_bundle(path);
}

PretrainSummary cmd_pretrain(const ExperimentFile& f) {
    PipelinePaths paths{f.out_dir};
    fs::create_directories(paths.bundles_dir());

    SceneCorpus train = build_corpus(f, f.corpus_size, 0x0107);
    SceneCorpus heldout = build_corpus(f, f.heldout_size, 0xbeef00);

    PretrainSummary summary;

    SurrogateBundle surrogate = pretrain_stage1(BundleKind::surrogate, f.surrogate_dims,
                                                Vocabulary::standard(), train.pairs, f.pretrain,
                                                f.surrogate_seed);
    summary.surrogate_retrieval = retrieval_accuracy(surrogate, heldout.pairs);
    summary.surrogate_itm_separation = itm_separation(surrogate, heldout.pairs);
    save_bundle(surrogate, paths.surrogate_path(), f.config_hash);

    std::vector<VqaSample> vqa_train = build_vqa_samples(f, train);
    // Held-out VQA questions come from held-out scenes.
    std::vector<VqaSample> vqa_heldout;
    {
        Rng rng(Rng::mix(f.data_seed, 0x59a1));
        for (const auto& gs : heldout.scenes) {
            auto qs = enumerate_questions(gs.spec);
            for (int i = static_cast<int>(qs.size()) - 1; i > 0; --i)
                std::swap(qs[i], qs[rng.uniform_int(i + 1)]);
            int take = std::min<int>(4, static_cast<int>(qs.size()));
            for (int i = 0; i < take; ++i) vqa_heldout.push_back({gs.image, qs[i]});
        }
    }

    for (const auto& spec : f.victims) {
        SurrogateBundle victim = pretrain_stage1(BundleKind::victim, spec.dims,
                                                 Vocabulary::standard(), train.pairs, f.pretrain,
                                                 spec.seed);
        train_victim_heads(victim, vqa_train, f.vqa, spec.seed);
        summary.victim_vqa_acc[spec.name] = victim_vqa_accuracy(victim, vqa_heldout);
        int parsed = 0;
        for (const auto& gs : heldout.scenes) {
            try {
                if (parse_caption(victim_caption(victim, gs.image), f.grid) == gs.spec) ++parsed;
            } catch (const std::invalid_argument&) {
            }
        }
        summary.victim_caption_parse[spec.name] =
            static_cast<double>(parsed) / heldout.scenes.size();
        save_bundle(victim, paths.victim_path(spec.name), f.config_hash);
    }

    for (int i = 0; i < f.eval_encoder_count; ++i) {
        SurrogateBundle enc = pretrain_text_encoder(f.eval_encoder_dims, Vocabulary::standard(),
                                                    train.pairs, f.pretrain,
                                                    f.eval_encoder_seed + i);
        save_bundle(enc, paths.encoder_path(i), f.config_hash);
    }

    json js{{"format", "ipga-pretrain-summary"},
            {"tool_version", kToolVersion},
            {"config_hash", f.config_hash},
            {"surrogate_retrieval", summary.surrogate_retrieval},
            {"surrogate_itm_separation", summary.surrogate_itm_separation},
            {"victim_vqa_acc", summary.victim_vqa_acc},
            {"victim_caption_parse", summary.victim_caption_parse}};
    std::ofstream os(paths.pretrain_summary_path(), std::ios::trunc);
    os << js.dump(1) << '\n';
    return summary;
}

void cmd_gendata(const ExperimentFile& f) {
    PipelinePaths paths{f.out_dir};
    fs::create_directories(paths.data_dir());
    Dataset ds = generate_dataset(f.data_count, f.data_seed, f.mode, f.scene_config());
    export_dataset(ds, paths.dataset_stem(), f.config_hash);
    if (f.export_png) export_dataset_pngs(ds, paths.png_dir());
}

namespace {

Dataset load_dataset_checked(const PipelinePaths& paths) {
    if (!fs::exists(paths.dataset_stem() + ".json"))
        throw PrerequisiteError("missing dataset manifest " + paths.dataset_stem() +
                                ".json (run `ipga gendata` first)");
    return import_dataset(paths.dataset_stem());
}

} // namespace

void save_attack_batch(const AdversarialBatch& batch, const Dataset& ds,
                       const std::string& results_path, const std::string& payload_path,
                       const std::string& config_hash) {
    std::ofstream payload(payload_path, std::ios::binary | std::ios::trunc);
    if (!payload) throw std::runtime_error("save_attack_batch: cannot open " + payload_path);

    json instances = json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < batch.instance_ids.size(); ++i) {
        const AttackResult& r = batch.results[i];
        json parts = json::array();
        for (const auto& p : r.partition_trace)
            parts.push_back({{"semantic", p.semantic}, {"residual", p.residual}});
        instances.push_back({{"id", batch.instance_ids[i]},
                             {"offset", offset},
                             {"iterations_run", r.iterations_run},
                             {"constraint_ok", r.constraint_ok},
                             {"aborted", r.aborted},
                             {"abort_reason", r.abort_reason},
                             {"loss_trace", r.loss_trace},
                             {"partition_trace", parts}});
        payload.write(reinterpret_cast<const char*>(r.x_adv.v.data()),
                      static_cast<std::streamsize>(r.x_adv.size() * sizeof(double)));
        offset += r.x_adv.size() * sizeof(double);
    }
    if (!payload) throw std::runtime_error("save_attack_batch: payload write failed");

    json js{{"format", "ipga-attack-results"},
            {"tool_version", kToolVersion},
            {"config_hash", config_hash},
            {"method", batch.method},
            {"img_h", ds.scene_cfg.img_h},
            {"img_w", ds.scene_cfg.img_w},
            {"payload", fs::path(payload_path).filename().string()},
            {"instances", instances}};
    std::ofstream os(results_path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_attack_batch: cannot open " + results_path);
    os << js.dump(1) << '\n';
}

AdversarialBatch load_attack_batch(const std::string& results_path,
                                   const std::string& payload_path, const Dataset& ds) {
    if (!fs::exists(results_path))
        throw PrerequisiteError("missing attack results " + results_path +
                                " (run `ipga attack` first)");
    std::ifstream is(results_path);
    json js;
    try {
        is >> js;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_attack_batch: corrupt " + results_path + ": " + e.what());
    }
    if (js.value("format", "") != "ipga-attack-results")
        throw std::runtime_error("load_attack_batch: " + results_path +
                                 " is not an attack result file");
    std::ifstream payload(payload_path, std::ios::binary);
    if (!payload) throw PrerequisiteError("missing attack payload " + payload_path);

    AdversarialBatch batch;
    batch.method = js.at("method");
    const int h = js.at("img_h"), w = js.at("img_w");
    if (h != ds.scene_cfg.img_h || w != ds.scene_cfg.img_w)
        throw std::runtime_error("load_attack_batch: image geometry does not match the dataset");
    for (const auto& j : js.at("instances")) {
        AttackResult r;
        r.iterations_run = j.at("iterations_run");
        r.constraint_ok = j.at("constraint_ok");
        r.aborted = j.at("aborted");
        r.abort_reason = j.at("abort_reason");
        r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
        for (const auto& sp : j.at("partition_trace")) {
            IndexPartition p;
            p.semantic = sp.at("semantic").get<std::vector<int>>();
            p.residual = sp.at("residual").get<std::vector<int>>();
            r.partition_trace.push_back(std::move(p));
        }
        r.x_adv = Image(h, w);
        payload.seekg(static_cast<std::streamoff>(j.at("offset").get<std::uint64_t>()));
        payload.read(reinterpret_cast<char*>(r.x_adv.v.data()),
                     static_cast<std::streamsize>(r.x_adv.size() * sizeof(double)));
        if (!payload)
            throw std::runtime_error("load_attack_batch: truncated payload in " + payload_path);
        batch.instance_ids.push_back(j.at("id"));
        batch.results.push_back(std::move(r));
    }
    return batch;
}

void cmd_attack(const ExperimentFile& f, AttackMethod method) {
    PipelinePaths paths{f.out_dir};
    Dataset ds = load_dataset_checked(paths);
    SurrogateBundle surrogate = load_bundle_checked(paths.surrogate_path());

    std::vector<int> all_ids;
    for (const auto& inst : ds.instances) all_ids.push_back(inst.id);
    AdversarialBatch batch =
        attack_instances(ds, all_ids, method, f.resolved_attack(), surrogate, f.workers);

    fs::create_directories(paths.attacks_dir(batch.method));
    save_attack_batch(batch, ds, paths.results_path(batch.method),
                      paths.adv_payload_path(batch.method), f.config_hash);
    if (f.export_png) {
        fs::create_directories(paths.adv_png_dir(batch.method));
        for (std::size_t i = 0; i < batch.results.size(); ++i) {
            write_png(batch.results[i].x_adv,
                      paths.adv_png_dir(batch.method) + "/" +
                          std::to_string(batch.instance_ids[i]) + ".png");
        }
    }
}

std::string cmd_evaluate(const ExperimentFile& f, AttackMethod method,
                         const DefenseConfig& defense) {
    PipelinePaths paths{f.out_dir};
    Dataset ds = load_dataset_checked(paths);
    SurrogateBundle surrogate = load_bundle_checked(paths.surrogate_path());

    std::vector<SurrogateBundle> victims;
    std::vector<VictimRef> victim_refs;
    victims.reserve(f.victims.size());
    for (const auto& spec : f.victims) victims.push_back(load_bundle_checked(paths.victim_path(spec.name)));
    for (std::size_t i = 0; i < f.victims.size(); ++i)
        victim_refs.push_back({f.victims[i].name, &victims[i]});

    std::vector<SurrogateBundle> encoders;
    for (int i = 0; i < f.eval_encoder_count; ++i)
        encoders.push_back(load_bundle_checked(paths.encoder_path(i)));

    const std::string method_name = attack_method_name(method);
    AdversarialBatch all = load_attack_batch(paths.results_path(method_name),
                                             paths.adv_payload_path(method_name), ds);

    std::vector<int> keep = clean_filter(ds, victim_refs);
    std::set<int> keep_set(keep.begin(), keep.end());
    AdversarialBatch batch;
    batch.method = all.method;
    for (std::size_t i = 0; i < all.instance_ids.size(); ++i) {
        if (keep_set.count(all.instance_ids[i])) {
            batch.instance_ids.push_back(all.instance_ids[i]);
            batch.results.push_back(std::move(all.results[i]));
        }
    }

    EvalReport rep = evaluate_batch(ds, batch, f.resolved_attack(), surrogate, victim_refs,
                                    encoders, defense, f.workers);
    fs::create_directories(paths.eval_dir());
    std::string stem = paths.eval_stem(method_name, defense.tag(), f.config_hash, f.attack.seed);
    save_report(rep, stem + ".json", stem + ".csv", f.config_hash);
    return stem + ".json";
}

void cmd_report(const std::vector<std::string>& report_paths, const std::string& out_json,
                const std::string& out_csv) {
    if (report_paths.empty()) throw PrerequisiteError("report: no evaluation reports given");
    json rows = json::array();
    std::string csv = "method,defense,mode,victim,asr,clean_acc,ensemble_mean,"
                      "mean_residual_deviation,n_records,instances_filtered\n";
    for (const auto& path : report_paths) {
        EvalReport r = load_report(path);
        for (const auto& [victim, agg] : r.per_victim) {
            rows.push_back({{"method", r.method},
                            {"defense", r.defense_tag},
                            {"mode", attack_mode_name(r.mode)},
                            {"victim", victim},
                            {"asr", agg.asr},
                            {"clean_acc", agg.clean_acc},
                            {"ensemble_mean", agg.ensemble_mean},
                            {"mean_residual_deviation", agg.mean_residual_deviation},
                            {"n_records", agg.n_records},
                            {"instances_filtered", r.instances_filtered}});
            std::ostringstream line;
            line.precision(17);
            line << r.method << ',' << r.defense_tag << ',' << attack_mode_name(r.mode) << ','
                 << victim << ',' << agg.asr << ',' << agg.clean_acc << ',' << agg.ensemble_mean
                 << ',' << agg.mean_residual_deviation << ',' << agg.n_records << ','
                 << r.instances_filtered << '\n';
            csv += line.str();
        }
        Aggregates all = r.overall();
        rows.push_back({{"method", r.method},
                        {"defense", r.defense_tag},
                        {"mode", attack_mode_name(r.mode)},
                        {"victim", "ALL"},
                        {"asr", all.asr},
                        {"clean_acc", all.clean_acc},
                        {"ensemble_mean", all.ensemble_mean},
                        {"mean_residual_deviation", all.mean_residual_deviation},
                        {"n_records", all.n_records},
                        {"instances_filtered", r.instances_filtered}});
        std::ostringstream line;
        line.precision(17);
        line << r.method << ',' << r.defense_tag << ',' << attack_mode_name(r.mode) << ",ALL,"
             << all.asr << ',' << all.clean_acc << ',' << all.ensemble_mean << ','
             << all.mean_residual_deviation << ',' << all.n_records << ','
             << r.instances_filtered << '\n';
        csv += line.str();
    }
    json js{{"format", "ipga-comparison"}, {"tool_version", kToolVersion}, {"rows", rows}};
    std::ofstream os(out_json, std::ios::trunc);
    if (!os) throw std::runtime_error("report: cannot open " + out_json);
    os << js.dump(1) << '\n';
    std::ofstream cs(out_csv, std::ios::trunc);
    if (!cs) throw std::runtime_error("report: cannot open " + out_csv);
    cs << csv;
}

} // namespace ipga
