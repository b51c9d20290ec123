#include "maldef/harness.hpp"

#include "maldef/detector.hpp"
#include "maldef/error.hpp"
#include "maldef/parallel.hpp"
#include "maldef/seed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace maldef {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw ManifestError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ManifestError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_opt(const json& j, std::string_view key, T& out) {
    const std::string k(key);
    if (j.contains(k)) out = j.at(k).get<T>();
}

bool is_variant(std::string_view tag) {
    return tag == variant_om || tag == variant_p_om || tag == variant_p_atm;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json history_json(const TrainResult& r) {
    json h = json::array();
    for (const auto& e : r.history)
        h.push_back({{"epoch", e.epoch},
                     {"learning_rate", e.learning_rate},
                     {"train_loss", e.train_loss},
                     {"validation_accuracy", e.validation_accuracy}});
    return {{"best_epoch", r.best_epoch}, {"history", h}};
}

std::string fixed(double v, int digits = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string budget_label(double b) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", b);
    return buf;
}

} // namespace

void ExperimentConfig::validate() const {
    if (corpus_dir) {
        if (manifest.class_names.size() < 2) throw ManifestError("experiment needs at least 2 classes");
        CorpusManifest m = manifest;
        m.counts.assign(m.class_names.size(), 0);
        m.validate();
    } else {
        manifest.validate();
    }
    preprocess.validate();
    train.validate();
    perturb.validate();
    if (input_side < 4) throw ManifestError("model input side must be at least 4");
    if (attacks.subset == 0 && !attacks.kinds.empty()) throw ManifestError("attack subset must be non-empty");
    for (double b : attacks.budgets)
        if (!(b > 0.0 && b <= 1.0)) throw ManifestError("attack budgets must lie in (0, 1]");
    AttackConfig probe = attacks.settings;
    probe.validate();
    if (run_p_atm && !run_p_om) throw ManifestError("P+ATM needs P+OM: adversarial examples are generated against it");
    std::set<std::string> seen;
    for (const auto& t : attacks.targets) {
        if (!is_variant(t)) throw ManifestError("unknown attack target '" + t + "'");
        if (!seen.insert(t).second) throw ManifestError("attack target '" + t + "' listed twice");
        if ((t == variant_om && !run_om) || (t == variant_p_om && !run_p_om) || (t == variant_p_atm && !run_p_atm))
            throw ManifestError("attack target '" + t + "' is not an enabled variant");
    }
    if (benign_class &&
        std::find(manifest.class_names.begin(), manifest.class_names.end(), *benign_class) ==
            manifest.class_names.end())
        throw ManifestError("benign class '" + *benign_class + "' is not a corpus class");
}

std::uint64_t ExperimentConfig::component_seed(std::string_view name) const { return child_seed(seed, name); }

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.manifest.class_names = {"family_a", "family_b", "family_c", "family_d"};
    cfg.manifest.counts = {500, 500, 500, 500};
    cfg.preprocess.chunk_length = 256;
    return cfg;
}

json to_json(const ExperimentConfig& cfg) {
    json kinds = json::array();
    for (auto k : cfg.attacks.kinds) kinds.push_back(std::string(to_string(k)));
    const auto& a = cfg.attacks.settings;
    json corpus = {{"classes", cfg.manifest.class_names},
                   {"counts", cfg.manifest.counts},
                   {"ratios", cfg.manifest.ratios},
                   {"synthesis",
                    {{"min_size", cfg.synthesis.min_size},
                     {"max_size", cfg.synthesis.max_size},
                     {"motif_share", cfg.synthesis.motif_share},
                     {"random_share", cfg.synthesis.random_share},
                     {"filler_share", cfg.synthesis.filler_share}}}};
    corpus["dir"] = cfg.corpus_dir ? json(cfg.corpus_dir->string()) : json(nullptr);
    corpus["benign_class"] = cfg.benign_class ? json(*cfg.benign_class) : json(nullptr);
    return {
        {"seed", cfg.seed},
        {"output_dir", cfg.output_dir.string()},
        {"corpus", corpus},
        {"preprocess",
         {{"threshold", cfg.preprocess.threshold},
          {"chunk_length", cfg.preprocess.chunk_length},
          {"keep_partial_tail", cfg.preprocess.keep_partial_tail}}},
        {"model", {{"input_side", cfg.input_side}}},
        {"train",
         {{"learning_rate", cfg.train.learning_rate},
          {"decay", cfg.train.decay},
          {"decay_step", cfg.train.decay_step},
          {"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"clip_norm", cfg.train.clip_norm}}},
        {"perturb",
         {{"indexs", cfg.perturb.indexs},
          {"sizes", cfg.perturb.sizes},
          {"eta", cfg.perturb.eta},
          {"retries", cfg.perturb.retries}}},
        {"attacks",
         {{"kinds", kinds},
          {"budgets", cfg.attacks.budgets},
          {"targets", cfg.attacks.targets},
          {"subset", cfg.attacks.subset},
          {"iterations", a.iterations},
          {"population", a.population},
          {"crossover", a.crossover},
          {"mutation", a.mutation},
          {"donors", a.donors},
          {"tournament", a.tournament},
          {"copycat_strength", a.copycat_strength}}},
        {"variants", {{"OM", cfg.run_om}, {"P+OM", cfg.run_p_om}, {"P+ATM", cfg.run_p_atm}}},
    };
}

ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg = default_experiment_config();
    try {
        reject_unknown(j, {"seed", "output_dir", "corpus", "preprocess", "model", "train", "perturb", "attacks", "variants"},
                       "experiment config");
        read_opt(j, "seed", cfg.seed);
        if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
        if (j.contains("corpus")) {
            const json& c = j["corpus"];
            reject_unknown(c, {"classes", "counts", "ratios", "synthesis", "dir", "benign_class"}, "corpus");
            read_opt(c, "classes", cfg.manifest.class_names);
            if (c.contains("classes") && !c.contains("counts"))
                cfg.manifest.counts.assign(cfg.manifest.class_names.size(), 0);
            read_opt(c, "counts", cfg.manifest.counts);
            read_opt(c, "ratios", cfg.manifest.ratios);
            if (c.contains("dir") && !c["dir"].is_null()) cfg.corpus_dir = fs::path(c["dir"].get<std::string>());
            if (c.contains("benign_class") && !c["benign_class"].is_null())
                cfg.benign_class = c["benign_class"].get<std::string>();
            if (c.contains("synthesis")) {
                const json& s = c["synthesis"];
                reject_unknown(s, {"min_size", "max_size", "motif_share", "random_share", "filler_share"}, "synthesis");
                read_opt(s, "min_size", cfg.synthesis.min_size);
                read_opt(s, "max_size", cfg.synthesis.max_size);
                read_opt(s, "motif_share", cfg.synthesis.motif_share);
                read_opt(s, "random_share", cfg.synthesis.random_share);
                read_opt(s, "filler_share", cfg.synthesis.filler_share);
            }
        }
        if (j.contains("preprocess")) {
            const json& p = j["preprocess"];
            reject_unknown(p, {"threshold", "chunk_length", "keep_partial_tail"}, "preprocess");
            read_opt(p, "threshold", cfg.preprocess.threshold);
            read_opt(p, "chunk_length", cfg.preprocess.chunk_length);
            read_opt(p, "keep_partial_tail", cfg.preprocess.keep_partial_tail);
        }
        if (j.contains("model")) {
            reject_unknown(j["model"], {"input_side"}, "model");
            read_opt(j["model"], "input_side", cfg.input_side);
        }
        if (j.contains("train")) {
            const json& t = j["train"];
            reject_unknown(t, {"learning_rate", "decay", "decay_step", "epochs", "batch_size", "clip_norm"}, "train");
            read_opt(t, "learning_rate", cfg.train.learning_rate);
            read_opt(t, "decay", cfg.train.decay);
            read_opt(t, "decay_step", cfg.train.decay_step);
            read_opt(t, "epochs", cfg.train.epochs);
            read_opt(t, "batch_size", cfg.train.batch_size);
            read_opt(t, "clip_norm", cfg.train.clip_norm);
        }
        if (j.contains("perturb")) {
            const json& p = j["perturb"];
            reject_unknown(p, {"indexs", "sizes", "eta", "retries"}, "perturb");
            read_opt(p, "indexs", cfg.perturb.indexs);
            read_opt(p, "sizes", cfg.perturb.sizes);
            read_opt(p, "eta", cfg.perturb.eta);
            read_opt(p, "retries", cfg.perturb.retries);
        }
        if (j.contains("attacks")) {
            const json& a = j["attacks"];
            reject_unknown(a,
                           {"kinds", "budgets", "targets", "subset", "iterations", "population", "crossover",
                            "mutation", "donors", "tournament", "copycat_strength"},
                           "attacks");
            if (a.contains("kinds")) {
                cfg.attacks.kinds.clear();
                for (const auto& k : a["kinds"]) cfg.attacks.kinds.push_back(parse_attack_kind(k.get<std::string>()));
            }
            read_opt(a, "budgets", cfg.attacks.budgets);
            read_opt(a, "targets", cfg.attacks.targets);
            read_opt(a, "subset", cfg.attacks.subset);
            auto& s = cfg.attacks.settings;
            read_opt(a, "iterations", s.iterations);
            read_opt(a, "population", s.population);
            read_opt(a, "crossover", s.crossover);
            read_opt(a, "mutation", s.mutation);
            read_opt(a, "donors", s.donors);
            read_opt(a, "tournament", s.tournament);
            read_opt(a, "copycat_strength", s.copycat_strength);
        }
        if (j.contains("variants")) {
            const json& v = j["variants"];
            reject_unknown(v, {"OM", "P+OM", "P+ATM"}, "variants");
            read_opt(v, "OM", cfg.run_om);
            read_opt(v, "P+OM", cfg.run_p_om);
            read_opt(v, "P+ATM", cfg.run_p_atm);
        }
    } catch (const json::exception& e) {
        throw ManifestError(std::string("malformed experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot read experiment config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ManifestError("experiment config " + path.string() + " is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

CorpusSplit build_corpus(const ExperimentConfig& cfg) {
    CorpusSplit out;
    out.manifest = cfg.manifest;
    out.manifest.seed = cfg.component_seed("corpus");
    std::vector<Sample> samples;
    if (cfg.corpus_dir) {
        samples = ingest_binary_dir(*cfg.corpus_dir, out.manifest);
        out.manifest.counts.assign(out.manifest.class_names.size(), 0);
        for (const auto& s : samples) ++out.manifest.counts[s.label];
    } else {
        SynthesisProfile profile = cfg.synthesis;
        profile.chunk_length = cfg.preprocess.chunk_length;
        samples = synth_corpus(out.manifest, profile);
    }
    out.split = split(samples, out.manifest);
    return out;
}

namespace {

TrainResult train_variant(const ExperimentConfig& cfg, std::string_view tag, std::span<const Sample> train_set,
                          std::span<const Sample> validation, bool with_preprocess) {
    const std::optional<PreprocessConfig> pre =
        with_preprocess ? std::optional<PreprocessConfig>(cfg.preprocess) : std::nullopt;
    const auto tr = prepare_inputs(train_set, pre, cfg.input_side);
    const auto va = prepare_inputs(validation, pre, cfg.input_side);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.component_seed("train." + std::string(tag));
    const Classifier init(cfg.input_side, cfg.manifest.class_count(), cfg.component_seed("init." + std::string(tag)));
    return train(init, tr, va, tc);
}

} // namespace

Pretrained pretrain(const ExperimentConfig& cfg, const Split& split) {
    Pretrained out;
    if (cfg.run_om) out.om = train_variant(cfg, variant_om, split.train, split.validation, false);
    if (cfg.run_p_om) out.p_om = train_variant(cfg, variant_p_om, split.train, split.validation, true);
    return out;
}

AdvTrainingSet build_adv_training_set(const Classifier& pretrained, std::span<const Sample> train_set,
                                      const PreprocessConfig& preprocess, const PerturbSpec& spec,
                                      std::optional<std::size_t> benign_label) {
    spec.validate();
    const Detector detector(pretrained, preprocess);
    std::vector<std::vector<AdvSample>> found(train_set.size());
    std::vector<GenerationStats> stats(train_set.size());
    parallel_for(train_set.size(), [&](std::size_t i) {
        const Sample& s = train_set[i];
        if (benign_label && s.label == *benign_label) return;
        found[i] = generate_adversarial(s.bytes, s.label, s.id, detector, spec, &stats[i]);
    });

    AdvTrainingSet out;
    out.samples.assign(train_set.begin(), train_set.end());
    out.original_count = train_set.size();
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        out.attempts += stats[i].attempts;
        if (!found[i].empty()) ++out.parents_fooled;
        for (std::size_t k = 0; k < found[i].size(); ++k) {
            auto& adv = found[i][k];
            out.samples.push_back({adv.bytes, train_set[i].label, train_set[i].id + "#adv" + std::to_string(k)});
            out.adversarial.push_back(std::move(adv));
        }
    }
    if (out.adversarial.empty())
        out.warnings.push_back("no adversarial candidate fooled the pretrained model; training set is unchanged");
    return out;
}

TrainResult adv_train(const ExperimentConfig& cfg, std::span<const Sample> augmented,
                      std::span<const Sample> validation) {
    return train_variant(cfg, variant_p_atm, augmented, validation, true);
}

json to_json(const EvalReport& r) {
    return {{"variant", r.variant},   {"condition", r.condition}, {"accuracy", r.accuracy},
            {"auc", r.auc},           {"macro_f1", r.macro_f1},   {"samples", r.sample_count}};
}

namespace {

struct Bundle {
    fs::path dir;
    json report;
    json timings = json::object();

    void write() const {
        fs::create_directories(dir);
        write_text(dir / "report.json", report.dump(2) + "\n");
        write_text(dir / "timings.json", timings.dump(2) + "\n");
        write_report_tables(dir, report);
        write_text(dir / "summary.txt", render_report(report));
    }
};

// Donors for label k come from one class: the configured benign class, else class (k + 1) mod C.
std::vector<std::vector<ByteSequence>> donor_pools(const Split& split, std::size_t classes,
                                                   std::optional<std::size_t> benign) {
    std::vector<std::vector<ByteSequence>> pools(classes);
    for (const auto& s : split.train) {
        for (std::size_t k = 0; k < classes; ++k) {
            const std::size_t donor = benign ? *benign : (k + 1) % classes;
            if (s.label == donor) pools[k].push_back(s.bytes);
        }
    }
    return pools;
}

} // namespace

json run_experiment(const ExperimentConfig& cfg, const LogSink& log) {
    cfg.validate();
    auto say = [&](const std::string& msg) {
        if (log) log(msg);
    };

    Bundle bundle;
    bundle.dir = cfg.output_dir;
    bundle.report = {{"format", "maldef-report"},
                     {"version", 1},
                     {"config", to_json(cfg)},
                     {"status", "running"},
                     {"notes",
                      {"adversarial examples are generated once against P+OM (offline adversarial training)",
                       "P+ATM is trained from a fresh initialization on originals plus adversarial examples"}}};
    json& report = bundle.report;
    fs::create_directories(bundle.dir / "checkpoints");

    auto stage = [&](const std::string& name, auto&& body) {
        say("[" + name + "] start");
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const std::exception& e) {
            report["status"] = "failed";
            report["failed_stage"] = name;
            report["error"] = e.what();
            bundle.timings[name] = seconds_since(t0);
            try {
                bundle.write();
            } catch (...) {
            }
            throw StageError(name, e.what());
        }
        bundle.timings[name] = seconds_since(t0);
        say("[" + name + "] done in " + fixed(bundle.timings[name].get<double>(), 1) + " s");
    };

    CorpusSplit corpus;
    std::optional<std::size_t> benign;
    stage("corpus", [&] {
        corpus = build_corpus(cfg);
        if (cfg.benign_class) {
            const auto& names = corpus.manifest.class_names;
            benign = static_cast<std::size_t>(std::find(names.begin(), names.end(), *cfg.benign_class) - names.begin());
        }
        report["corpus"] = {{"classes", corpus.manifest.class_names},
                            {"counts", corpus.manifest.counts},
                            {"train", corpus.split.train.size()},
                            {"validation", corpus.split.validation.size()},
                            {"test", corpus.split.test.size()},
                            {"warnings", corpus.split.warnings}};
        for (const auto& w : corpus.split.warnings) say("warning: " + w);
        say("corpus: " + std::to_string(corpus.split.train.size()) + " train, " +
            std::to_string(corpus.split.validation.size()) + " validation, " +
            std::to_string(corpus.split.test.size()) + " test");
    });
    const Split& sp = corpus.split;

    auto save = [&](std::string_view tag, const TrainResult& r, bool with_preprocess) {
        std::string file(tag);
        std::replace(file.begin(), file.end(), '+', '_');
        save_checkpoint(bundle.dir / "checkpoints" / (file + ".json"),
                        {std::string(tag), r.model, r.history, corpus.manifest.class_names,
                         with_preprocess ? std::optional<PreprocessConfig>(cfg.preprocess) : std::nullopt});
        report["training"][std::string(tag)] = history_json(r);
        say(std::string(tag) + ": best epoch " + std::to_string(r.best_epoch) + ", validation accuracy " +
            fixed(r.history[r.best_epoch].validation_accuracy));
    };

    Pretrained pre;
    stage("pretrain", [&] {
        pre = pretrain(cfg, sp);
        if (pre.om) save(variant_om, *pre.om, false);
        if (pre.p_om) save(variant_p_om, *pre.p_om, true);
    });

    std::optional<TrainResult> atm;
    if (cfg.run_p_atm) {
        AdvTrainingSet adv;
        stage("adversarial-set", [&] {
            PerturbSpec spec = cfg.perturb;
            spec.seed = cfg.component_seed("perturb");
            adv = build_adv_training_set(pre.p_om->model, sp.train, cfg.preprocess, spec, benign);
            std::size_t by_gen[2] = {0, 0};
            std::size_t by_op[2] = {0, 0};
            json index = json::array();
            for (std::size_t i = 0; i < adv.adversarial.size(); ++i) {
                const auto& a = adv.adversarial[i];
                ++by_gen[a.generator == Generator::gradient_bytes];
                ++by_op[a.operation == Injection::insert];
                index.push_back({{"id", adv.samples[adv.original_count + i].id},
                                 {"parent", a.parent_id},
                                 {"generator", std::string(to_string(a.generator))},
                                 {"operation", std::string(to_string(a.operation))},
                                 {"size", a.bytes.size()}});
            }
            fs::create_directories(bundle.dir / "adversarial");
            write_text(bundle.dir / "adversarial" / "index.json", index.dump(2) + "\n");
            report["adversarial_set"] = {{"original", adv.original_count},
                                         {"adversarial", adv.adversarial.size()},
                                         {"augmented", adv.samples.size()},
                                         {"parents_fooled", adv.parents_fooled},
                                         {"attempts", adv.attempts},
                                         {"random_bytes", by_gen[0]},
                                         {"gradient_bytes", by_gen[1]},
                                         {"replace", by_op[0]},
                                         {"insert", by_op[1]},
                                         {"warnings", adv.warnings}};
            for (const auto& w : adv.warnings) say("warning: " + w);
            say("adversarial set: " + std::to_string(adv.adversarial.size()) + " examples from " +
                std::to_string(adv.parents_fooled) + " of " + std::to_string(adv.original_count) + " parents");
        });
        stage("adv-train", [&] {
            atm = adv_train(cfg, adv.samples, sp.validation);
            save(variant_p_atm, *atm, true);
        });
    }

    struct Variant {
        std::string tag;
        const Classifier* model;
        bool with_preprocess;
    };
    std::vector<Variant> variants;
    if (pre.om) variants.push_back({std::string(variant_om), &pre.om->model, false});
    if (pre.p_om) variants.push_back({std::string(variant_p_om), &pre.p_om->model, true});
    if (atm) variants.push_back({std::string(variant_p_atm), &atm->model, true});
    auto detector_for = [&](const Variant& v) {
        return Detector(*v.model, v.with_preprocess ? std::optional<PreprocessConfig>(cfg.preprocess) : std::nullopt);
    };

    stage("evaluate", [&] {
        json clean = json::array();
        for (const auto& v : variants) {
            EvalReport r = evaluate(detector_for(v), sp.test);
            r.variant = v.tag;
            clean.push_back(to_json(r));
            bundle.timings["evaluate." + v.tag] = r.wall_time;
            say(v.tag + " clean accuracy " + fixed(r.accuracy));
        }
        report["clean"] = clean;
    });

    if (!cfg.attacks.kinds.empty() && !cfg.attacks.targets.empty()) {
        stage("attack", [&] {
            const auto subset = attack_subset(sp.test, cfg.attacks.subset, cfg.component_seed("attack.subset"));
            std::vector<AttackTarget> targets;
            for (const auto& tag : cfg.attacks.targets) {
                const auto it = std::find_if(variants.begin(), variants.end(), [&](const Variant& v) { return v.tag == tag; });
                targets.push_back({tag, detector_for(*it)});
            }
            json subset_clean = json::object();
            for (const auto& t : targets) {
                EvalReport r = evaluate(t.detector, subset);
                r.variant = t.tag;
                subset_clean[t.tag] = to_json(r);
            }
            const auto pools = donor_pools(sp, corpus.manifest.class_count(), benign);
            const DonorProvider donors = [&](std::size_t label) {
                return std::span<const ByteSequence>(pools[label]);
            };
            json tables = json::array();
            for (AttackKind kind : cfg.attacks.kinds) {
                const std::string name(to_string(kind));
                AttackConfig ac = cfg.attacks.settings;
                ac.kind = kind;
                ac.seed = cfg.component_seed("attack." + name);
                const auto t0 = std::chrono::steady_clock::now();
                const AttackTable table = run_attack_suite(targets, subset, cfg.attacks.budgets, ac, donors);
                bundle.timings["attack." + name] = seconds_since(t0);
                json rows = json::array();
                for (std::size_t r = 0; r < table.rows.size(); ++r) {
                    json cells = json::array();
                    std::string line = name + " " + table.rows[r] + ":";
                    for (std::size_t b = 0; b < table.budgets.size(); ++b) {
                        cells.push_back(to_json(table.cells[r][b]));
                        line += " " + fixed(table.cells[r][b].accuracy);
                    }
                    rows.push_back({{"variant", table.rows[r]}, {"clean", subset_clean[table.rows[r]]}, {"cells", cells}});
                    say(line);
                }
                tables.push_back({{"kind", name}, {"budgets", table.budgets}, {"subset", subset.size()}, {"rows", rows}});
            }
            report["attacks"] = tables;
        });
    }

    report["status"] = "complete";
    bundle.write();
    return report;
}

std::string render_report(const json& report) {
    std::ostringstream out;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    out << "status: " << report.value("status", std::string("unknown"));
    if (report.contains("failed_stage")) out << " (stage " << report["failed_stage"].get<std::string>() << ")";
    out << "\n";
    if (report.contains("error")) out << "error: " << report["error"].get<std::string>() << "\n";
    if (report.contains("corpus")) {
        const auto& c = report["corpus"];
        out << "corpus: " << c["train"] << " train / " << c["validation"] << " validation / " << c["test"]
            << " test\n";
    }
    if (report.contains("adversarial_set")) {
        const auto& a = report["adversarial_set"];
        out << "adversarial training set: " << a["original"] << " originals + " << a["adversarial"]
            << " adversarial examples\n";
    }
    if (report.contains("clean")) {
        out << "\nClean test set\n";
        out << pad("variant", 8) << pad("accuracy", 10) << pad("auc", 10) << "macro-F1\n";
        for (const auto& r : report["clean"])
            out << pad(r["variant"].get<std::string>(), 8) << pad(fixed(r["accuracy"].get<double>()), 10)
                << pad(fixed(r["auc"].get<double>()), 10) << fixed(r["macro_f1"].get<double>()) << "\n";
    }
    if (report.contains("attacks")) {
        for (const auto& t : report["attacks"]) {
            out << "\nAccuracy under " << t["kind"].get<std::string>() << " (n=" << t["subset"] << ")\n";
            out << pad("variant", 8) << pad("clean", 10);
            for (const auto& b : t["budgets"]) out << pad(budget_label(b.get<double>()), 10);
            out << "\n";
            for (const auto& row : t["rows"]) {
                out << pad(row["variant"].get<std::string>(), 8) << pad(fixed(row["clean"]["accuracy"].get<double>()), 10);
                for (const auto& c : row["cells"]) out << pad(fixed(c["accuracy"].get<double>()), 10);
                out << "\n";
            }
        }
    }
    if (report.contains("notes")) {
        out << "\n";
        for (const auto& n : report["notes"]) out << "note: " << n.get<std::string>() << "\n";
    }
    return out.str();
}

void write_report_tables(const fs::path& dir, const json& report) {
    auto row = [](const json& r, const std::string& budget) {
        std::ostringstream s;
        s.precision(17);
        s << r["variant"].get<std::string>() << ',' << r["condition"].get<std::string>() << ',' << budget << ','
          << r["accuracy"].get<double>() << ',' << r["auc"].get<double>() << ',' << r["macro_f1"].get<double>() << ','
          << r["samples"].get<std::size_t>() << '\n';
        return s.str();
    };
    const std::string header = "variant,condition,budget,accuracy,auc,macro_f1,samples\n";
    if (report.contains("clean")) {
        std::string text = header;
        for (const auto& r : report["clean"]) text += row(r, "0");
        write_text(dir / "clean.csv", text);
    }
    if (report.contains("attacks")) {
        for (const auto& t : report["attacks"]) {
            std::string text = header;
            for (const auto& r : t["rows"]) {
                text += row(r["clean"], "0");
                for (std::size_t b = 0; b < r["cells"].size(); ++b)
                    text += row(r["cells"][b], budget_label(t["budgets"][b].get<double>()));
            }
            write_text(dir / ("attack_" + t["kind"].get<std::string>() + ".csv"), text);
        }
    }
}

} // namespace maldef
