// Command-line pipeline driver: pretrain | gendata | attack | evaluate |
// report. One JSON config document describes an experiment; every command
// is deterministic and idempotent for a fixed config.

#include "ipga/pipeline.hpp"
#include "ipga/serialize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace {

// Exit codes: 0 ok, 2 config/schema violation, 3 missing prerequisite,
// 4 seed collision, 1 other failure.
enum ExitCode { kOk = 0, kFailure = 1, kBadConfig = 2, kMissingPrereq = 3, kSeedCollision = 4 };

void emit_error(const char* kind, const std::string& message, int code) {
    nlohmann::json err{{"error", kind}, {"message", message}, {"exit_code", code}};
    std::fprintf(stderr, "%s\n", err.dump().c_str());
}

ipga::ExperimentFile load_config_or_die(const std::string& path, const std::string& out_override,
                                        int workers_override, std::int64_t seed_override) {
    ipga::ExperimentFile f = ipga::load_experiment_file(path);
    if (!out_override.empty()) f.out_dir = out_override;
    if (const char* root = std::getenv("IPGA_OUT_ROOT");
        root && *root && std::filesystem::path(f.out_dir).is_relative()) {
        f.out_dir = (std::filesystem::path(root) / f.out_dir).string();
    }
    if (workers_override > 0) f.workers = workers_override;
    if (seed_override >= 0) f.attack.seed = static_cast<std::uint64_t>(seed_override);
    return f;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Projector-guided targeted adversarial attacks on a toy VLM stack"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string method_arg;
    std::string defense_arg;
    int workers = 0;
    std::int64_t seed = -1;
    std::vector<std::string> report_paths;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        auto* opt = cmd->add_option("--config", config_path, "experiment config (JSON)");
        if (needs_config) opt->required();
        cmd->add_option("--out", out_dir, "output directory override");
        cmd->add_option("--workers", workers, "worker threads (0 = all cores)");
        cmd->add_option("--seed", seed, "attack seed override");
    };

    CLI::App* c_pretrain = app.add_subcommand("pretrain", "train surrogate, victims, evaluators");
    add_common(c_pretrain, true);
    CLI::App* c_gendata = app.add_subcommand("gendata", "generate the attack-instance dataset");
    add_common(c_gendata, true);
    CLI::App* c_attack = app.add_subcommand("attack", "craft adversarial images");
    add_common(c_attack, true);
    c_attack->add_option("--method", method_arg, "ipga | ipga_r | encoder_only");
    CLI::App* c_eval = app.add_subcommand("evaluate", "black-box evaluation on the victims");
    add_common(c_eval, true);
    c_eval->add_option("--method", method_arg, "ipga | ipga_r | encoder_only");
    c_eval->add_option("--defense", defense_arg, "none | bit_red | jpeg");
    CLI::App* c_report = app.add_subcommand("report", "consolidate evaluation reports");
    add_common(c_report, true);
    c_report->add_option("paths", report_paths, "evaluation report JSON files");
    CLI::App* c_defaults =
        app.add_subcommand("print-config", "print the default experiment config");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_defaults->parsed()) {
            std::cout << ipga::default_experiment_json() << '\n';
            return kOk;
        }

        ipga::ExperimentFile f = load_config_or_die(config_path, out_dir, workers, seed);
        ipga::PipelinePaths paths{f.out_dir};

        if (c_pretrain->parsed()) {
            ipga::PretrainSummary s = ipga::cmd_pretrain(f);
            std::printf("surrogate: retrieval %.3f, itm separation %.3f\n",
                        s.surrogate_retrieval, s.surrogate_itm_separation);
            for (const auto& [name, acc] : s.victim_vqa_acc)
                std::printf("victim %s: vqa accuracy %.3f, caption parse %.3f\n", name.c_str(),
                            acc, s.victim_caption_parse.at(name));
        } else if (c_gendata->parsed()) {
            ipga::cmd_gendata(f);
            std::printf("dataset: %d instances -> %s\n", f.data_count,
                        paths.dataset_stem().c_str());
        } else if (c_attack->parsed()) {
            ipga::AttackMethod m =
                method_arg.empty() ? f.method : ipga::attack_method_from_name(method_arg);
            ipga::cmd_attack(f, m);
            std::printf("attack %s: results -> %s\n", ipga::attack_method_name(m),
                        paths.results_path(ipga::attack_method_name(m)).c_str());
        } else if (c_eval->parsed()) {
            ipga::AttackMethod m =
                method_arg.empty() ? f.method : ipga::attack_method_from_name(method_arg);
            ipga::DefenseConfig d = f.defense;
            if (!defense_arg.empty()) d.kind = ipga::defense_kind_from_name(defense_arg);
            std::string out = ipga::cmd_evaluate(f, m, d);
            std::printf("evaluation -> %s\n", out.c_str());
        } else if (c_report->parsed()) {
            if (report_paths.empty()) {
                // default: everything under out/eval
                for (const auto& e :
                     std::filesystem::directory_iterator(paths.eval_dir())) {
                    if (e.path().extension() == ".json") report_paths.push_back(e.path().string());
                }
                std::sort(report_paths.begin(), report_paths.end());
            }
            std::filesystem::create_directories(paths.report_dir());
            ipga::cmd_report(report_paths, paths.report_dir() + "/report.json",
                             paths.report_dir() + "/report.csv");
            std::printf("report -> %s/report.{json,csv}\n", paths.report_dir().c_str());
        }
        return kOk;
    } catch (const ipga::SeedCollisionError& e) {
        emit_error("seed_collision", e.what(), kSeedCollision);
        return kSeedCollision;
    } catch (const ipga::PrerequisiteError& e) {
        emit_error("missing_prerequisite", e.what(), kMissingPrereq);
        return kMissingPrereq;
    } catch (const std::invalid_argument& e) {
        emit_error("config", e.what(), kBadConfig);
        return kBadConfig;
    } catch (const std::exception& e) {
        emit_error("failure", e.what(), kFailure);
        return kFailure;
    }
}
