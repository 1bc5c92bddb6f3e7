#include "ipga/experiment.hpp"

#include "ipga/parallel.hpp"
#include "ipga/pretrain.hpp"
#include "ipga/serialize.hpp"
#include "ipga/victim.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ipga {

using nlohmann::json;

const char* attack_method_name(AttackMethod m) {
    switch (m) {
    case AttackMethod::ipga: return "ipga";
    case AttackMethod::ipga_r: return "ipga_r";
    case AttackMethod::encoder_only: return "encoder_only";
    }
    return "?";
}

AttackMethod attack_method_from_name(const std::string& s) {
    if (s == "ipga") return AttackMethod::ipga;
    if (s == "ipga_r") return AttackMethod::ipga_r;
    if (s == "encoder_only") return AttackMethod::encoder_only;
    throw std::invalid_argument("unknown attack method: " + s);
}

AttackConfig resolve_method_config(AttackMethod m, AttackConfig cfg) {
    if (m == AttackMethod::encoder_only) cfg.weights.alpha = 0.0;
    return cfg;
}

Aggregates EvalReport::overall() const {
    Aggregates a;
    if (records.empty()) return a;
    a.asr = asr(records);
    a.clean_acc = clean_acc(records);
    double sim = 0.0, dev = 0.0;
    int ndev = 0;
    for (const auto& r : records) {
        sim += r.caption_sim_mean;
        if (r.residual_deviation >= 0.0) {
            dev += r.residual_deviation;
            ++ndev;
        }
    }
    a.ensemble_mean = sim / records.size();
    a.mean_residual_deviation = ndev ? dev / ndev : -1.0;
    a.n_records = static_cast<int>(records.size());
    return a;
}

std::vector<int> clean_filter(const Dataset& ds, const std::vector<VictimRef>& victims) {
    std::vector<int> ids;
    if (ds.mode == AttackMode::global) {
        for (const auto& inst : ds.instances) ids.push_back(inst.id);
        return ids;
    }
    std::vector<Runtime> rts;
    rts.reserve(victims.size());
    for (const auto& v : victims) rts.emplace_back(*v.bundle);
    for (const auto& inst : ds.instances) {
        bool ok = true;
        for (const auto& rt : rts) {
            if (victim_answer(rt, inst.x_clean, inst.target_qa) != inst.target_qa.answer ||
                victim_answer(rt, inst.x_clean, inst.unrelated_qa) != inst.unrelated_qa.answer) {
                ok = false;
                break;
            }
        }
        if (ok) ids.push_back(inst.id);
    }
    return ids;
}

AdversarialBatch attack_instances(const Dataset& ds, const std::vector<int>& ids,
                                  AttackMethod method, const AttackConfig& cfg,
                                  const SurrogateBundle& surrogate, int workers) {
    AdversarialBatch batch;
    batch.method = attack_method_name(method);
    batch.instance_ids = ids;
    batch.results.resize(ids.size());
    AttackConfig rc = resolve_method_config(method, cfg);
    rc.quiet = true;

    parallel_for(ids.size(), workers, [&](std::size_t i) {
        const AttackInstance& inst = ds.instances.at(ids[i]);
        if (method == AttackMethod::ipga_r) {
            batch.results[i] = run_ipga_r(inst.x_clean, inst.t_tar, inst.t_clean, surrogate, rc);
        } else {
            batch.results[i] = run_ipga(inst.x_clean, inst.t_tar, inst.t_clean, surrogate, rc);
        }
    });
    return batch;
}

namespace {

double max_query_cosine(const Mat<double>& queries, const Embedding& e) {
    double best = -2.0;
    for (int i = 0; i < queries.r; ++i) {
        Embedding row(queries.row_ptr(i), queries.row_ptr(i) + queries.c);
        best = std::max(best, cosine_similarity(row, e));
    }
    return best;
}

} // namespace

EvalReport evaluate_batch(const Dataset& ds, const AdversarialBatch& batch,
                          const AttackConfig& cfg, const SurrogateBundle& surrogate,
                          const std::vector<VictimRef>& victims,
                          const std::vector<SurrogateBundle>& eval_encoders,
                          const DefenseConfig& defense, int workers) {
    if (victims.empty()) throw std::invalid_argument("evaluate_batch: need at least one victim");
    const std::uint64_t surr_sum = surrogate.param_checksum();
    for (const auto& v : victims) {
        if (v.bundle->param_checksum() == surr_sum)
            throw std::invalid_argument(
                "evaluate_batch: victim '" + v.name +
                "' shares parameters with the attack surrogate (black-box violation)");
    }
    defense.validate();

    EvalReport rep;
    rep.method = batch.method;
    rep.defense_tag = defense.tag();
    rep.mode = ds.mode;
    rep.dataset_seed = ds.seed;
    rep.attack_seed = cfg.seed;
    rep.instances_total = static_cast<int>(ds.instances.size());
    rep.instances_filtered = static_cast<int>(batch.instance_ids.size());

    const std::size_t n = batch.instance_ids.size();
    const std::size_t nv = victims.size();
    std::vector<InstanceRecord> rows(n * nv);
    std::vector<double> s_clean(n), s_adv(n), resdev(n, -1.0);

    Runtime surrogate_rt(surrogate);
    std::vector<Runtime> victim_rts;
    victim_rts.reserve(nv);
    for (const auto& v : victims) victim_rts.emplace_back(*v.bundle);
    std::vector<Runtime> encoder_rts;
    encoder_rts.reserve(eval_encoders.size());
    for (const auto& e : eval_encoders) encoder_rts.emplace_back(e);

    parallel_for(n, workers, [&](std::size_t i) {
        const AttackInstance& inst = ds.instances.at(batch.instance_ids[i]);
        const AttackResult& res = batch.results[i];
        Image x_eval = apply_defense(res.x_adv, defense);

        // Surrogate-side diagnostics: target similarity and residual drift.
        Embedding e_tar = qformer_text_embedding(surrogate_rt, inst.t_tar);
        Mat<double> q_clean = query_outputs(surrogate_rt, inst.x_clean);
        Mat<double> q_adv = query_outputs(surrogate_rt, res.x_adv);
        s_clean[i] = max_query_cosine(q_clean, e_tar);
        s_adv[i] = max_query_cosine(q_adv, e_tar);
        if (!res.partition_trace.empty()) {
            const IndexPartition& part = res.partition_trace.back();
            double dev = 0.0;
            for (int r : part.residual) {
                for (int c = 0; c < q_adv.c; ++c) {
                    double d = q_adv.at(r, c) - q_clean.at(r, c);
                    dev += d * d;
                }
            }
            resdev[i] = dev;
        }

        for (std::size_t v = 0; v < nv; ++v) {
            InstanceRecord& rec = rows[i * nv + v];
            rec.instance_id = inst.id;
            rec.victim = victims[v].name;
            rec.attack_aborted = res.aborted;
            rec.target_false = inst.target_answer_false;
            rec.unrelated_truth = inst.unrelated_qa.answer;
            rec.s_tar_clean = s_clean[i];
            rec.s_tar_adv = s_adv[i];
            rec.residual_deviation = resdev[i];
            rec.pred_target_adv = victim_answer(victim_rts[v], x_eval, inst.target_qa);
            rec.pred_unrelated_adv = victim_answer(victim_rts[v], x_eval, inst.unrelated_qa);
            if (ds.mode == AttackMode::global) {
                rec.caption_adv = victim_caption(victim_rts[v], x_eval);
                if (!encoder_rts.empty()) {
                    double sum = 0.0;
                    for (const auto& ert : encoder_rts) {
                        double s = cosine_similarity(text_embedding(ert, rec.caption_adv),
                                                     text_embedding(ert, inst.t_tar));
                        rec.caption_sims.push_back(s);
                        sum += s;
                    }
                    rec.caption_sim_mean = sum / encoder_rts.size();
                }
            }
        }
    });

    rep.records = std::move(rows);
    for (const auto& res : batch.results)
        if (res.aborted) ++rep.attacks_aborted;
    if (n > 0) {
        double sc = 0.0, sa = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sc += s_clean[i];
            sa += s_adv[i];
        }
        rep.mean_s_tar_clean = sc / n;
        rep.mean_s_tar_adv = sa / n;
    }

    for (const auto& v : victims) {
        std::vector<InstanceRecord> vr;
        for (const auto& r : rep.records)
            if (r.victim == v.name) vr.push_back(r);
        Aggregates a;
        if (!vr.empty()) {
            a.asr = asr(vr);
            a.clean_acc = clean_acc(vr);
            double sim = 0.0, dev = 0.0;
            int ndev = 0;
            for (const auto& r : vr) {
                sim += r.caption_sim_mean;
                if (r.residual_deviation >= 0.0) {
                    dev += r.residual_deviation;
                    ++ndev;
                }
            }
            a.ensemble_mean = sim / vr.size();
            a.mean_residual_deviation = ndev ? dev / ndev : -1.0;
            a.n_records = static_cast<int>(vr.size());
        }
        rep.per_victim.emplace(v.name, a);
    }
    return rep;
}

EvalReport run_transfer_experiment(const Dataset& ds, AttackMethod method,
                                   const AttackConfig& cfg, const SurrogateBundle& surrogate,
                                   const std::vector<VictimRef>& victims,
                                   const std::vector<SurrogateBundle>& eval_encoders,
                                   const DefenseConfig& defense, int workers) {
    std::vector<int> ids = clean_filter(ds, victims);
    AdversarialBatch batch = attack_instances(ds, ids, method, cfg, surrogate, workers);
    return evaluate_batch(ds, batch, cfg, surrogate, victims, eval_encoders, defense, workers);
}

namespace {

json record_to_json(const InstanceRecord& r) {
    return json{{"instance_id", r.instance_id},
                {"victim", r.victim},
                {"attack_aborted", r.attack_aborted},
                {"target_false", r.target_false},
                {"pred_target_adv", r.pred_target_adv},
                {"unrelated_truth", r.unrelated_truth},
                {"pred_unrelated_adv", r.pred_unrelated_adv},
                {"caption_adv", r.caption_adv},
                {"caption_sims", r.caption_sims},
                {"caption_sim_mean", r.caption_sim_mean},
                {"s_tar_clean", r.s_tar_clean},
                {"s_tar_adv", r.s_tar_adv},
                {"residual_deviation", r.residual_deviation}};
}

InstanceRecord record_from_json(const json& j) {
    InstanceRecord r;
    r.instance_id = j.at("instance_id");
    r.victim = j.at("victim");
    r.attack_aborted = j.at("attack_aborted");
    r.target_false = j.at("target_false");
    r.pred_target_adv = j.at("pred_target_adv");
    r.unrelated_truth = j.at("unrelated_truth");
    r.pred_unrelated_adv = j.at("pred_unrelated_adv");
    r.caption_adv = j.at("caption_adv");
    r.caption_sims = j.at("caption_sims").get<std::vector<double>>();
    r.caption_sim_mean = j.at("caption_sim_mean");
    r.s_tar_clean = j.at("s_tar_clean");
    r.s_tar_adv = j.at("s_tar_adv");
    r.residual_deviation = j.at("residual_deviation");
    return r;
}

json aggregates_to_json(const Aggregates& a) {
    return json{{"asr", a.asr},
                {"clean_acc", a.clean_acc},
                {"ensemble_mean", a.ensemble_mean},
                {"mean_residual_deviation", a.mean_residual_deviation},
                {"n_records", a.n_records}};
}

} // namespace

void save_report(const EvalReport& r, const std::string& json_path, const std::string& csv_path,
                 const std::string& config_hash) {
    json per_victim;
    for (const auto& [name, a] : r.per_victim) per_victim[name] = aggregates_to_json(a);
    json records = json::array();
    for (const auto& rec : r.records) records.push_back(record_to_json(rec));
    json out{{"format", "ipga-eval-report"},
             {"tool_version", kToolVersion},
             {"config_hash", config_hash},
             {"method", r.method},
             {"defense", r.defense_tag},
             {"mode", attack_mode_name(r.mode)},
             {"dataset_seed", r.dataset_seed},
             {"attack_seed", r.attack_seed},
             {"instances_total", r.instances_total},
             {"instances_filtered", r.instances_filtered},
             {"attacks_aborted", r.attacks_aborted},
             {"mean_s_tar_clean", r.mean_s_tar_clean},
             {"mean_s_tar_adv", r.mean_s_tar_adv},
             {"per_victim", per_victim},
             {"records", records}};
    std::ofstream os(json_path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_report: cannot open " + json_path);
    os << out.dump(1) << '\n';

    std::ofstream cs(csv_path, std::ios::trunc);
    if (!cs) throw std::runtime_error("save_report: cannot open " + csv_path);
    cs << "instance_id,victim,attack_aborted,target_false,pred_target_adv,asr_hit,"
          "unrelated_truth,pred_unrelated_adv,unrelated_ok,caption_adv,caption_sim_mean,"
          "s_tar_clean,s_tar_adv,residual_deviation\n";
    cs.precision(17);
    for (const auto& rec : r.records) {
        cs << rec.instance_id << ',' << rec.victim << ',' << (rec.attack_aborted ? 1 : 0) << ','
           << rec.target_false << ',' << rec.pred_target_adv << ','
           << ((!rec.attack_aborted && rec.pred_target_adv == rec.target_false) ? 1 : 0) << ','
           << rec.unrelated_truth << ',' << rec.pred_unrelated_adv << ','
           << ((!rec.attack_aborted && rec.pred_unrelated_adv == rec.unrelated_truth) ? 1 : 0)
           << ',' << '"' << rec.caption_adv << '"' << ',' << rec.caption_sim_mean << ','
           << rec.s_tar_clean << ',' << rec.s_tar_adv << ',' << rec.residual_deviation << '\n';
    }
    if (!cs) throw std::runtime_error("save_report: csv write failed");
}

EvalReport load_report(const std::string& json_path) {
    std::ifstream is(json_path);
    if (!is) throw std::runtime_error("load_report: cannot open " + json_path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_report: corrupt report " + json_path + ": " + e.what());
    }
    if (j.value("format", "") != "ipga-eval-report")
        throw std::runtime_error("load_report: " + json_path + " is not an eval report");

    EvalReport r;
    r.method = j.at("method");
    r.defense_tag = j.at("defense");
    r.mode = attack_mode_from_name(j.at("mode"));
    r.dataset_seed = j.at("dataset_seed");
    r.attack_seed = j.at("attack_seed");
    r.instances_total = j.at("instances_total");
    r.instances_filtered = j.at("instances_filtered");
    r.attacks_aborted = j.at("attacks_aborted");
    r.mean_s_tar_clean = j.at("mean_s_tar_clean");
    r.mean_s_tar_adv = j.at("mean_s_tar_adv");
    for (const auto& rec : j.at("records")) r.records.push_back(record_from_json(rec));

    // Aggregates are a pure function of the records; re-derive and verify.
    for (const auto& [name, aj] : j.at("per_victim").items()) {
        Aggregates a;
        a.asr = aj.at("asr");
        a.clean_acc = aj.at("clean_acc");
        a.ensemble_mean = aj.at("ensemble_mean");
        a.mean_residual_deviation = aj.at("mean_residual_deviation");
        a.n_records = aj.at("n_records");
        std::vector<InstanceRecord> vr;
        for (const auto& rec : r.records)
            if (rec.victim == name) vr.push_back(rec);
        if (static_cast<int>(vr.size()) != a.n_records ||
            (!vr.empty() && (std::abs(asr(vr) - a.asr) > 1e-12 ||
                             std::abs(clean_acc(vr) - a.clean_acc) > 1e-12)))
            throw std::runtime_error("load_report: aggregates do not match records in " +
                                     json_path);
        r.per_victim.emplace(name, a);
    }
    return r;
}

} // namespace ipga
