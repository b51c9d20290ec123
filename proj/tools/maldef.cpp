#include "maldef/attacks.hpp"
#include "maldef/corpus.hpp"
#include "maldef/detector.hpp"
#include "maldef/error.hpp"
#include "maldef/harness.hpp"
#include "maldef/imaging.hpp"
#include "maldef/model.hpp"
#include "maldef/parallel.hpp"
#include "maldef/perturb.hpp"
#include "maldef/preprocess.hpp"
#include "maldef/seed.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace maldef;

namespace {

struct Corpus {
    CorpusManifest manifest;
    std::vector<Sample> samples;
};

Corpus load_corpus(const fs::path& dir) {
    Corpus c;
    c.manifest = load_manifest(dir / "manifest.json");
    c.samples = ingest_binary_dir(dir, c.manifest);
    return c;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<Sample> pick_split(const Corpus& c, const std::string& which) {
    if (which == "all") return c.samples;
    Split s = split(c.samples, c.manifest);
    if (which == "train") return s.train;
    if (which == "validation") return s.validation;
    if (which == "test") return s.test;
    throw ManifestError("unknown split '" + which + "' (train, validation, test, all)");
}

struct TrainOptions {
    double lr = 0.1;
    double decay = 0.6;
    std::size_t decay_step = 5;
    std::size_t epochs = 30;
    std::size_t batch = 32;
    double clip = 5.0;
    std::uint64_t seed = 1;
    std::size_t side = 64;

    void attach(CLI::App* cmd) {
        cmd->add_option("--lr", lr, "initial learning rate")->capture_default_str();
        cmd->add_option("--decay", decay, "step decay factor")->capture_default_str();
        cmd->add_option("--decay-step", decay_step, "epochs per decay step")->capture_default_str();
        cmd->add_option("--epochs", epochs)->capture_default_str();
        cmd->add_option("--batch-size", batch)->capture_default_str();
        cmd->add_option("--clip-norm", clip, "max gradient L2 norm per batch, 0 disables")->capture_default_str();
        cmd->add_option("--seed", seed)->capture_default_str();
        cmd->add_option("--input-side", side, "model input side")->capture_default_str();
    }

    TrainConfig config() const {
        TrainConfig tc;
        tc.learning_rate = lr;
        tc.decay = decay;
        tc.decay_step = decay_step;
        tc.epochs = epochs;
        tc.batch_size = batch;
        tc.clip_norm = clip;
        tc.seed = child_seed(seed, "train");
        return tc;
    }
};

struct FilterOptions {
    double threshold = 1.0;
    double chunk_kb = 10.0;
    std::optional<std::size_t> chunk_bytes;
    bool drop_tail = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--threshold", threshold, "entropy threshold in bits")->capture_default_str();
        cmd->add_option("--chunk-kb", chunk_kb, "chunk length in KiB")->capture_default_str();
        cmd->add_option("--chunk-bytes", chunk_bytes, "chunk length in bytes (overrides --chunk-kb)");
        cmd->add_flag("--drop-partial-tail", drop_tail, "filter the trailing partial chunk like the others");
    }

    PreprocessConfig config() const {
        PreprocessConfig pc;
        pc.threshold = threshold;
        pc.chunk_length = chunk_bytes ? *chunk_bytes : static_cast<std::size_t>(std::llround(chunk_kb * 1024.0));
        pc.keep_partial_tail = !drop_tail;
        pc.validate();
        return pc;
    }
};

void print_eval(const EvalReport& r) {
    std::printf("%s %s: accuracy %.4f auc %.4f macro-F1 %.4f (n=%zu, %.2fs)\n", r.variant.c_str(),
                r.condition.c_str(), r.accuracy, r.auc, r.macro_f1, r.sample_count, r.wall_time);
}

std::string file_stem(const std::string& id) {
    fs::path p(id);
    std::string s = (p.parent_path() / p.stem()).generic_string();
    for (char& ch : s)
        if (ch == '/' || ch == '#') ch = '_';
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"maldef: entropy-filtered, adversarially trained byte-image malware detector"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads (default: hardware concurrency)");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "synthesize a labeled corpus");
    std::string gen_manifest, gen_out;
    std::vector<std::string> gen_classes;
    std::vector<std::size_t> gen_counts;
    std::uint64_t gen_seed = 0;
    SynthesisProfile profile;
    gen->add_option("--manifest", gen_manifest, "manifest JSON (classes, counts, ratios, seed)");
    gen->add_option("--classes", gen_classes, "class names")->delimiter(',');
    gen->add_option("--counts", gen_counts, "samples per class")->delimiter(',');
    gen->add_option("--seed", gen_seed);
    gen->add_option("--min-size", profile.min_size)->capture_default_str();
    gen->add_option("--max-size", profile.max_size)->capture_default_str();
    gen->add_option("--chunk-length", profile.chunk_length, "filter chunk length the filler runs target")
        ->capture_default_str();
    gen->add_option("--out", gen_out)->required();

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "apply the entropy filter to one file");
    std::string pre_in, pre_out;
    FilterOptions pre_opts;
    pre->add_option("--in", pre_in)->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out)->required();
    pre_opts.attach(pre);

    // to-image
    auto* img = app.add_subcommand("to-image", "convert a file to a grayscale PGM");
    std::string img_in, img_out;
    std::optional<std::size_t> img_size;
    img->add_option("--in", img_in)->required()->check(CLI::ExistingFile);
    img->add_option("--out", img_out)->required();
    img->add_option("--size", img_size, "resize to this side");

    // train
    auto* trn = app.add_subcommand("train", "train OM, or P+OM with --preprocess");
    std::string trn_corpus, trn_out;
    bool trn_pre = false;
    TrainOptions trn_opts;
    FilterOptions trn_filter;
    trn->add_option("--corpus", trn_corpus)->required()->check(CLI::ExistingDirectory);
    trn->add_option("--out", trn_out, "checkpoint path")->required();
    trn->add_flag("--preprocess", trn_pre, "put the entropy filter in front of the model");
    trn_opts.attach(trn);
    trn_filter.attach(trn);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "clean metrics of a checkpoint");
    std::string ev_model, ev_corpus, ev_split = "test", ev_report;
    ev->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
    ev->add_option("--corpus", ev_corpus)->required()->check(CLI::ExistingDirectory);
    ev->add_option("--split", ev_split, "train, validation, test or all")->capture_default_str();
    ev->add_option("--report", ev_report, "write metrics JSON here");

    // gen-adv
    auto* ga = app.add_subcommand("gen-adv", "generate adversarial examples for the training split");
    std::string ga_model, ga_corpus, ga_out, ga_split = "train";
    PerturbSpec ga_spec;
    ga->add_option("--model", ga_model)->required()->check(CLI::ExistingFile);
    ga->add_option("--corpus", ga_corpus)->required()->check(CLI::ExistingDirectory);
    ga->add_option("--out", ga_out)->required();
    ga->add_option("--split", ga_split)->capture_default_str();
    ga->add_option("--indexs", ga_spec.indexs, "injection sites per attempt")->capture_default_str();
    ga->add_option("--sizes", ga_spec.sizes, "max injected fraction")->capture_default_str();
    ga->add_option("--eta", ga_spec.eta)->capture_default_str();
    ga->add_option("--retries", ga_spec.retries)->capture_default_str();
    ga->add_option("--seed", ga_spec.seed)->capture_default_str();

    // adv-train
    auto* at = app.add_subcommand("adv-train", "train P+ATM on originals plus adversarial examples");
    std::string at_corpus, at_adv, at_out;
    TrainOptions at_opts;
    FilterOptions at_filter;
    at->add_option("--corpus", at_corpus)->required()->check(CLI::ExistingDirectory);
    at->add_option("--adv", at_adv, "gen-adv output directory")->required()->check(CLI::ExistingDirectory);
    at->add_option("--out", at_out)->required();
    at_opts.attach(at);
    at_filter.attach(at);

    // attack
    auto* atk = app.add_subcommand("attack", "attack a checkpoint on a sample directory");
    std::string atk_kind, atk_model, atk_subset, atk_out, atk_report, atk_donors;
    AttackConfig atk_cfg;
    std::optional<std::size_t> atk_n;
    atk->add_option("--kind", atk_kind, "gamma, baraf or copycat")->required();
    atk->add_option("--budget", atk_cfg.budget)->capture_default_str();
    atk->add_option("--model", atk_model)->required()->check(CLI::ExistingFile);
    atk->add_option("--subset", atk_subset, "corpus directory with manifest.json")->required()->check(CLI::ExistingDirectory);
    atk->add_option("--n", atk_n, "attack a seeded subset of this size");
    atk->add_option("--donors", atk_donors, "donor corpus for gamma; donors for class k come from class k+1 (default: the subset)");
    atk->add_option("--out", atk_out, "write attacked files here");
    atk->add_option("--report", atk_report, "write metrics JSON here");
    atk->add_option("--seed", atk_cfg.seed)->capture_default_str();
    atk->add_option("--iterations", atk_cfg.iterations)->capture_default_str();
    atk->add_option("--population", atk_cfg.population)->capture_default_str();

    // run-experiment
    auto* rx = app.add_subcommand("run-experiment", "pretrain, generate, adversarially train, evaluate and attack");
    std::string rx_config, rx_out, rx_dump;
    rx->add_option("--config", rx_config, "experiment config JSON (defaults when omitted)");
    rx->add_option("--out", rx_out, "override the output directory");
    rx->add_option("--write-default-config", rx_dump, "write the default config here and exit");

    // report
    auto* rp = app.add_subcommand("report", "render a report.json as text tables");
    std::string rp_in, rp_csv;
    rp->add_option("--in", rp_in, "report.json")->required()->check(CLI::ExistingFile);
    rp->add_option("--csv", rp_csv, "also write CSV tables into this directory");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_worker_count(threads);

    try {
        if (gen->parsed()) {
            CorpusManifest m;
            if (!gen_manifest.empty()) {
                m = load_manifest(gen_manifest);
            } else {
                m.class_names = gen_classes;
                m.counts = gen_counts;
                m.seed = gen_seed;
            }
            m.validate();
            const auto samples = synth_corpus(m, profile);
            write_corpus(gen_out, m, samples);
            std::printf("wrote %zu samples to %s\n", samples.size(), gen_out.c_str());
        } else if (pre->parsed()) {
            const auto cfg = pre_opts.config();
            const auto x = read_binary_file(pre_in);
            const auto y = preprocess(x, cfg);
            write_binary_file(pre_out, y.span());
            std::printf("kept %zu of %zu bytes\n", y.size(), x.size());
        } else if (img->parsed()) {
            const auto x = read_binary_file(img_in);
            if (img_size) {
                const auto r = bytes_to_input(x.span(), *img_size);
                write_pgm(img_out, r.pixels, r.side);
            } else {
                const auto g = bytes_to_image(x);
                write_pgm(img_out, g.pixels, g.side);
            }
        } else if (trn->parsed()) {
            const auto corpus = load_corpus(trn_corpus);
            const Split s = split(corpus.samples, corpus.manifest);
            for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
            std::optional<PreprocessConfig> pc;
            if (trn_pre) pc = trn_filter.config();
            const auto tr = prepare_inputs(s.train, pc, trn_opts.side);
            const auto va = prepare_inputs(s.validation, pc, trn_opts.side);
            const Classifier init(trn_opts.side, corpus.manifest.class_count(), child_seed(trn_opts.seed, "init"));
            const auto res = train(init, tr, va, trn_opts.config());
            for (const auto& e : res.history)
                std::printf("epoch %zu lr %.5f loss %.4f validation %.4f\n", e.epoch, e.learning_rate, e.train_loss,
                            e.validation_accuracy);
            std::printf("best epoch %zu\n", res.best_epoch);
            save_checkpoint(trn_out, {trn_pre ? "P+OM" : "OM", res.model, res.history, corpus.manifest.class_names, pc});
        } else if (ev->parsed()) {
            const auto ck = load_checkpoint(ev_model);
            const auto corpus = load_corpus(ev_corpus);
            const auto samples = pick_split(corpus, ev_split);
            EvalReport r = evaluate(Detector(ck.model, ck.preprocess), samples);
            r.variant = ck.tag;
            print_eval(r);
            if (!ev_report.empty()) write_json(ev_report, to_json(r));
        } else if (ga->parsed()) {
            const auto ck = load_checkpoint(ga_model);
            const auto corpus = load_corpus(ga_corpus);
            const auto samples = pick_split(corpus, ga_split);
            if (!ck.preprocess)
                std::fprintf(stderr, "warning: checkpoint has no entropy filter; generating against the raw pipeline\n");
            const Detector det(ck.model, ck.preprocess);
            std::vector<std::vector<AdvSample>> found(samples.size());
            parallel_for(samples.size(), [&](std::size_t i) {
                found[i] = generate_adversarial(samples[i].bytes, samples[i].label, samples[i].id, det, ga_spec);
            });
            json index = json::array();
            std::size_t parents = 0;
            for (std::size_t i = 0; i < samples.size(); ++i) {
                if (!found[i].empty()) ++parents;
                for (std::size_t k = 0; k < found[i].size(); ++k) {
                    const auto& a = found[i][k];
                    const std::string cls = corpus.manifest.class_names[samples[i].label];
                    const fs::path rel = fs::path(cls) / (file_stem(samples[i].id) + "_adv" + std::to_string(k) + ".bin");
                    write_binary_file(fs::path(ga_out) / rel, a.bytes.span());
                    index.push_back({{"file", rel.generic_string()},
                                     {"parent", a.parent_id},
                                     {"label", samples[i].label},
                                     {"class", cls},
                                     {"generator", std::string(to_string(a.generator))},
                                     {"operation", std::string(to_string(a.operation))}});
                }
            }
            write_json(fs::path(ga_out) / "index.json", index);
            std::printf("%zu adversarial examples from %zu of %zu samples\n", index.size(), parents, samples.size());
        } else if (at->parsed()) {
            const auto corpus = load_corpus(at_corpus);
            const Split s = split(corpus.samples, corpus.manifest);
            std::ifstream in(fs::path(at_adv) / "index.json");
            if (!in) throw CorpusError("missing index.json in " + at_adv);
            json index;
            in >> index;
            std::vector<Sample> augmented = s.train;
            for (const auto& e : index)
                augmented.push_back({read_binary_file(fs::path(at_adv) / e.at("file").get<std::string>()),
                                     e.at("label").get<std::size_t>(), e.at("file").get<std::string>()});
            const auto pc = at_filter.config();
            const auto tr = prepare_inputs(augmented, pc, at_opts.side);
            const auto va = prepare_inputs(s.validation, pc, at_opts.side);
            const Classifier init(at_opts.side, corpus.manifest.class_count(), child_seed(at_opts.seed, "init"));
            const auto res = train(init, tr, va, at_opts.config());
            for (const auto& e : res.history)
                std::printf("epoch %zu lr %.5f loss %.4f validation %.4f\n", e.epoch, e.learning_rate, e.train_loss,
                            e.validation_accuracy);
            std::printf("trained on %zu samples (%zu adversarial), best epoch %zu\n", augmented.size(), index.size(),
                        res.best_epoch);
            save_checkpoint(at_out, {"P+ATM", res.model, res.history, corpus.manifest.class_names, pc});
        } else if (atk->parsed()) {
            atk_cfg.kind = parse_attack_kind(atk_kind);
            atk_cfg.validate();
            const auto ck = load_checkpoint(atk_model);
            const auto corpus = load_corpus(atk_subset);
            std::vector<Sample> subset = corpus.samples;
            if (atk_n) subset = attack_subset(subset, *atk_n, child_seed(atk_cfg.seed, "subset"));
            const Corpus donor_corpus = atk_donors.empty() ? corpus : load_corpus(atk_donors);
            const std::size_t classes = corpus.manifest.class_count();
            std::vector<std::vector<ByteSequence>> pools(classes);
            for (const auto& d : donor_corpus.samples)
                for (std::size_t k = 0; k < classes; ++k)
                    if (d.label == (k + 1) % classes) pools[k].push_back(d.bytes);
            const AttackTarget target{ck.tag, Detector(ck.model, ck.preprocess)};
            const double budgets[1] = {atk_cfg.budget};
            const auto table = run_attack_suite(std::span(&target, 1), subset, budgets, atk_cfg,
                                                [&](std::size_t l) { return std::span<const ByteSequence>(pools[l]); });
            const EvalReport& r = table.cells[0][0];
            print_eval(r);
            if (!atk_out.empty()) {
                const ProbabilityOracle oracle = [&](std::span<const std::uint8_t> b) { return target.detector.predict(b); };
                for (const auto& smp : subset) {
                    ByteSequence adv;
                    switch (atk_cfg.kind) {
                    case AttackKind::baraf: adv = attack_baraf(smp.bytes, atk_cfg); break;
                    case AttackKind::copycat: adv = attack_copycat(smp.bytes, smp.label, target.detector, atk_cfg); break;
                    case AttackKind::gamma:
                        adv = attack_gamma(smp.bytes, smp.label, oracle, pools[smp.label], atk_cfg, smp.id);
                        break;
                    }
                    write_binary_file(fs::path(atk_out) / (file_stem(smp.id) + ".bin"), adv.span());
                }
            }
            if (!atk_report.empty()) write_json(atk_report, to_json(r));
        } else if (rx->parsed()) {
            if (!rx_dump.empty()) {
                write_json(rx_dump, to_json(default_experiment_config()));
                return 0;
            }
            ExperimentConfig cfg = rx_config.empty() ? default_experiment_config() : load_experiment_config(rx_config);
            if (!rx_out.empty()) cfg.output_dir = rx_out;
            const auto report = run_experiment(cfg, [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); });
            std::fputs(render_report(report).c_str(), stdout);
        } else if (rp->parsed()) {
            std::ifstream in(rp_in);
            json report;
            in >> report;
            std::fputs(render_report(report).c_str(), stdout);
            if (!rp_csv.empty()) {
                fs::create_directories(rp_csv);
                write_report_tables(rp_csv, report);
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
