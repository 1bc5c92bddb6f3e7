#include "ipga/config.hpp"

#include "ipga/serialize.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ipga {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::invalid_argument("config: " + where + ": " + what);
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
    if (!j.is_object()) fail(where, "expected an object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) fail(where, "unknown key '" + k + "'");
    }
}

// Numbers or exact fractions like "8/255".
double parse_ratio(const json& j, const std::string& where) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        auto slash = s.find('/');
        try {
            if (slash == std::string::npos) return std::stod(s);
            double num = std::stod(s.substr(0, slash));
            double den = std::stod(s.substr(slash + 1));
            if (den == 0.0) fail(where, "zero denominator");
            return num / den;
        } catch (const std::invalid_argument&) {
            fail(where, "cannot parse '" + s + "' as a number or fraction");
        }
    }
    fail(where, "expected a number or a \"a/b\" string");
}

Dims parse_dims(const json& j, const std::string& where, Dims base) {
    check_keys(j, where,
               {"img_h", "img_w", "patch", "d", "n_heads", "n_queries", "enc_layers",
                "txt_layers", "qf_layers", "mlp_mult", "max_text_len"});
    Dims d = base;
    if (j.contains("img_h")) d.img_h = j.at("img_h");
    if (j.contains("img_w")) d.img_w = j.at("img_w");
    if (j.contains("patch")) d.patch = j.at("patch");
    if (j.contains("d")) d.d = j.at("d");
    if (j.contains("n_heads")) d.n_heads = j.at("n_heads");
    if (j.contains("n_queries")) d.n_queries = j.at("n_queries");
    if (j.contains("enc_layers")) d.enc_layers = j.at("enc_layers");
    if (j.contains("txt_layers")) d.txt_layers = j.at("txt_layers");
    if (j.contains("qf_layers")) d.qf_layers = j.at("qf_layers");
    if (j.contains("mlp_mult")) d.mlp_mult = j.at("mlp_mult");
    if (j.contains("max_text_len")) d.max_text_len = j.at("max_text_len");
    return d;
}

} // namespace

AttackConfig ExperimentFile::resolved_attack() const {
    AttackConfig c = attack;
    c.mode = mode;
    if (!alpha_given)
        c.weights.alpha = (mode == AttackMode::global) ? 0.25 : 1.0;
    return c;
}

void ExperimentFile::validate() const {
    if (data_count <= 0) fail("data.count", "must be positive");
    if (grid != 2 && grid != 3) fail("data.grid", "must be 2 or 3");
    surrogate_dims.validate();
    eval_encoder_dims.validate();
    if (victims.empty()) fail("victims", "need at least one victim");
    std::set<std::uint64_t> seeds{surrogate_seed};
    for (const auto& v : victims) {
        v.dims.validate();
        if (v.name.empty()) fail("victims", "victim name must not be empty");
        if (!seeds.insert(v.seed).second)
            throw SeedCollisionError("config: seed collision: victim '" + v.name +
                                     "' reuses seed " + std::to_string(v.seed));
        if (v.dims.img_h != surrogate_dims.img_h || v.dims.img_w != surrogate_dims.img_w ||
            v.dims.patch != surrogate_dims.patch)
            fail("victims", "victim image geometry must match the surrogate");
    }
    for (int i = 0; i < eval_encoder_count; ++i) {
        if (!seeds.insert(eval_encoder_seed + i).second)
            throw SeedCollisionError("config: seed collision: eval encoder seed " +
                                     std::to_string(eval_encoder_seed + i) + " already used");
    }
    // Captions must fit every model's text window: bg pair + 4 words per
    // object + [BOS]/[EOS].
    int caption_max = 2 + 4 * grid * grid + 2;
    int window = std::min({surrogate_dims.max_text_len, eval_encoder_dims.max_text_len});
    for (const auto& v : victims) window = std::min(window, v.dims.max_text_len);
    if (caption_max > window)
        fail("data.grid", "captions of a " + std::to_string(grid) + "x" + std::to_string(grid) +
                              " grid need max_text_len >= " + std::to_string(caption_max));
    if (corpus_size < pretrain.batch) fail("surrogate.train.corpus", "smaller than batch size");
    if (heldout_size < 2) fail("surrogate.train.heldout", "need at least 2 held-out pairs");
    if (eval_encoder_count < 1) fail("eval_encoders.count", "need at least one encoder");
    defense.validate();
    AttackConfig rc = resolved_attack();
    rc.validate(surrogate_dims.n_queries, method == AttackMethod::ipga_r);
}

ExperimentFile parse_experiment_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    check_keys(j, "$",
               {"data", "surrogate", "victims", "eval_encoders", "vqa_train", "attack", "defense",
                "output", "workers"});

    ExperimentFile f;

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data", {"count", "seed", "grid", "mode"});
        if (d.contains("count")) f.data_count = d.at("count");
        if (d.contains("seed")) f.data_seed = d.at("seed");
        if (d.contains("grid")) f.grid = d.at("grid");
        if (d.contains("mode")) f.mode = attack_mode_from_name(d.at("mode"));
    }

    if (j.contains("surrogate")) {
        const json& s = j.at("surrogate");
        check_keys(s, "surrogate", {"seed", "dims", "train"});
        if (s.contains("seed")) f.surrogate_seed = s.at("seed");
        if (s.contains("dims")) f.surrogate_dims = parse_dims(s.at("dims"), "surrogate.dims", Dims{});
        if (s.contains("train")) {
            const json& t = s.at("train");
            check_keys(t, "surrogate.train",
                       {"corpus", "heldout", "batch", "clip_epochs", "qf_epochs", "lr",
                        "temperature", "verbose"});
            if (t.contains("corpus")) f.corpus_size = t.at("corpus");
            if (t.contains("heldout")) f.heldout_size = t.at("heldout");
            if (t.contains("batch")) f.pretrain.batch = t.at("batch");
            if (t.contains("clip_epochs")) f.pretrain.clip_epochs = t.at("clip_epochs");
            if (t.contains("qf_epochs")) f.pretrain.qf_epochs = t.at("qf_epochs");
            if (t.contains("lr")) f.pretrain.lr = t.at("lr");
            if (t.contains("temperature")) f.pretrain.temperature = t.at("temperature");
            if (t.contains("verbose")) f.pretrain.verbose = t.at("verbose");
        }
    }

    if (j.contains("victims")) {
        const json& vs = j.at("victims");
        if (!vs.is_array()) fail("victims", "expected an array");
        for (std::size_t i = 0; i < vs.size(); ++i) {
            const json& v = vs[i];
            std::string where = "victims[" + std::to_string(i) + "]";
            check_keys(v, where, {"name", "seed", "dims"});
            ExperimentFile::VictimSpec spec;
            spec.name = v.at("name");
            spec.seed = v.at("seed");
            spec.dims = v.contains("dims") ? parse_dims(v.at("dims"), where + ".dims",
                                                        f.surrogate_dims)
                                           : f.surrogate_dims;
            f.victims.push_back(std::move(spec));
        }
    } else {
        // The paper-shaped default pair: same-architecture different-seed,
        // and a larger cross-architecture victim.
        ExperimentFile::VictimSpec v1{"v1", 11, f.surrogate_dims};
        Dims d2 = f.surrogate_dims;
        d2.n_queries = 12;
        d2.d = 48;
        d2.n_heads = 4;
        ExperimentFile::VictimSpec v2{"v2", 13, d2};
        f.victims = {v1, v2};
    }

    f.eval_encoder_dims = f.surrogate_dims;
    f.eval_encoder_dims.d = 24;
    f.eval_encoder_dims.n_heads = 4;
    if (j.contains("eval_encoders")) {
        const json& e = j.at("eval_encoders");
        check_keys(e, "eval_encoders", {"count", "seed", "dims"});
        if (e.contains("count")) f.eval_encoder_count = e.at("count");
        if (e.contains("seed")) f.eval_encoder_seed = e.at("seed");
        if (e.contains("dims"))
            f.eval_encoder_dims = parse_dims(e.at("dims"), "eval_encoders.dims", f.eval_encoder_dims);
    }

    if (j.contains("vqa_train")) {
        const json& q = j.at("vqa_train");
        check_keys(q, "vqa_train", {"epochs", "batch", "lr", "questions_per_scene", "verbose"});
        if (q.contains("epochs")) f.vqa.epochs = q.at("epochs");
        if (q.contains("batch")) f.vqa.batch = q.at("batch");
        if (q.contains("lr")) f.vqa.lr = q.at("lr");
        if (q.contains("verbose")) f.vqa.verbose = q.at("verbose");
        if (q.contains("questions_per_scene")) f.vqa_questions_per_scene = q.at("questions_per_scene");
    }

    if (j.contains("attack")) {
        const json& a = j.at("attack");
        check_keys(a, "attack",
                   {"method", "mode", "epsilon", "eta", "steps", "alpha", "beta", "gamma",
                    "lambda_res", "k", "optimizer", "mu", "precision", "seed"});
        if (a.contains("method")) f.method = attack_method_from_name(a.at("method"));
        if (a.contains("mode")) f.mode = attack_mode_from_name(a.at("mode"));
        if (a.contains("epsilon")) f.attack.epsilon = parse_ratio(a.at("epsilon"), "attack.epsilon");
        if (a.contains("eta")) f.attack.eta = parse_ratio(a.at("eta"), "attack.eta");
        if (a.contains("steps")) f.attack.steps = a.at("steps");
        if (a.contains("alpha") && !a.at("alpha").is_null()) {
            f.attack.weights.alpha = a.at("alpha");
            f.alpha_given = true;
        }
        if (a.contains("beta")) f.attack.weights.beta = a.at("beta");
        if (a.contains("gamma")) f.attack.weights.gamma = a.at("gamma");
        if (a.contains("lambda_res")) f.attack.weights.lambda_res = a.at("lambda_res");
        if (a.contains("k")) f.attack.weights.k = a.at("k");
        if (a.contains("optimizer")) f.attack.optimizer = optimizer_kind_from_name(a.at("optimizer"));
        if (a.contains("mu")) f.attack.mu = a.at("mu");
        if (a.contains("precision")) f.attack.precision = precision_from_name(a.at("precision"));
        if (a.contains("seed")) f.attack.seed = a.at("seed");
    }

    if (j.contains("defense")) {
        const json& d = j.at("defense");
        check_keys(d, "defense", {"kind", "bits", "quality"});
        if (d.contains("kind")) f.defense.kind = defense_kind_from_name(d.at("kind"));
        if (d.contains("bits")) f.defense.bits = d.at("bits");
        if (d.contains("quality")) f.defense.quality = d.at("quality");
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        check_keys(o, "output", {"dir", "png"});
        if (o.contains("dir")) f.out_dir = o.at("dir");
        if (o.contains("png")) f.export_png = o.at("png");
    }
    if (j.contains("workers")) f.workers = j.at("workers");

    // Canonical hash over the parsed document (sorted keys, no whitespace).
    std::string canon = j.dump();
    std::uint64_t h = fnv1a(canon.data(), canon.size());
    std::ostringstream os;
    os << std::hex << h;
    f.config_hash = os.str();

    f.validate();
    return f;
}

ExperimentFile load_experiment_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_experiment_json(ss.str());
}

std::string default_experiment_json() {
    return R"({
 "data": {"count": 100, "seed": 5, "grid": 2, "mode": "fine_grained"},
 "surrogate": {
  "seed": 7,
  "dims": {"img_h": 64, "img_w": 64, "patch": 8, "d": 32, "n_heads": 4, "n_queries": 8,
           "enc_layers": 2, "txt_layers": 2, "qf_layers": 2, "mlp_mult": 4, "max_text_len": 24},
  "train": {"corpus": 384, "heldout": 64, "batch": 16, "clip_epochs": 30, "qf_epochs": 30,
            "lr": 0.002, "temperature": 0.1, "verbose": false}
 },
 "victims": [
  {"name": "v1", "seed": 11},
  {"name": "v2", "seed": 13, "dims": {"n_queries": 12, "d": 48}}
 ],
 "eval_encoders": {"count": 3, "seed": 101},
 "vqa_train": {"epochs": 60, "batch": 64, "lr": 0.003, "questions_per_scene": 6, "verbose": false},
 "attack": {"method": "ipga", "mode": "fine_grained", "epsilon": "8/255", "eta": "1/255",
            "steps": 200, "alpha": null, "beta": 0.5, "gamma": 1.0, "lambda_res": 0.0001,
            "k": 3, "optimizer": "nifgsm", "mu": 1.0, "precision": "f32", "seed": 3},
 "defense": {"kind": "none", "bits": 3, "quality": 75},
 "output": {"dir": "out", "png": false},
 "workers": 0
})";
}

} // namespace ipga
