#pragma once

#include "maldef/attacks.hpp"
#include "maldef/corpus.hpp"
#include "maldef/model.hpp"
#include "maldef/perturb.hpp"
#include "maldef/preprocess.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace maldef {

inline constexpr std::string_view variant_om = "OM";
inline constexpr std::string_view variant_p_om = "P+OM";
inline constexpr std::string_view variant_p_atm = "P+ATM";

struct AttackPlan {
    std::vector<AttackKind> kinds{AttackKind::gamma, AttackKind::baraf, AttackKind::copycat};
    std::vector<double> budgets{0.1, 0.2, 0.3};
    std::vector<std::string> targets{"OM", "P+OM", "P+ATM"};
    std::size_t subset = 200;
    AttackConfig settings;  // kind, budget and seed are filled per run
};

struct ExperimentConfig {
    CorpusManifest manifest;                 // seed is replaced by the derived corpus seed
    std::optional<std::filesystem::path> corpus_dir;  // ingest instead of synthesizing
    SynthesisProfile synthesis;
    PreprocessConfig preprocess;
    TrainConfig train = TrainConfig::desk_scale();
    std::size_t input_side = 64;
    PerturbSpec perturb;
    AttackPlan attacks;
    std::optional<std::string> benign_class;  // GAMMA donor class; the next class when unset
    bool run_om = true;
    bool run_p_om = true;
    bool run_p_atm = true;
    std::filesystem::path output_dir = "experiment";
    std::uint64_t seed = 2024;

    void validate() const;
    /// Seed for a named component: child_seed(seed, name).
    std::uint64_t component_seed(std::string_view name) const;
};

/// Default configuration: 4 synthetic classes of 500 samples each.
ExperimentConfig default_experiment_config();

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct CorpusSplit {
    CorpusManifest manifest;
    Split split;
};

CorpusSplit build_corpus(const ExperimentConfig& cfg);

struct Pretrained {
    std::optional<TrainResult> om;
    std::optional<TrainResult> p_om;
};

/// OM on the raw pipeline, P+OM with the entropy filter in front.
Pretrained pretrain(const ExperimentConfig& cfg, const Split& split);

struct AdvTrainingSet {
    std::vector<Sample> samples;  // originals first, then adversarial examples
    std::vector<AdvSample> adversarial;
    std::size_t original_count = 0;
    std::size_t parents_fooled = 0;
    std::size_t attempts = 0;
    std::vector<std::string> warnings;
};

/// Runs the generator over every training sample outside the benign class and
/// appends each fooled candidate with its parent's label.
AdvTrainingSet build_adv_training_set(const Classifier& pretrained, std::span<const Sample> train_set,
                                      const PreprocessConfig& preprocess, const PerturbSpec& spec,
                                      std::optional<std::size_t> benign_label = std::nullopt);

/// Fresh model, same architecture and schedule, trained on the augmented set
/// with the entropy filter in front.
TrainResult adv_train(const ExperimentConfig& cfg, std::span<const Sample> augmented,
                      std::span<const Sample> validation);

using LogSink = std::function<void(const std::string&)>;

/// Full pipeline. Writes report.json, CSV tables, summary.txt, timings.json and
/// checkpoints under cfg.output_dir and returns the report. A failing stage
/// leaves a partial report behind and throws StageError.
nlohmann::json run_experiment(const ExperimentConfig& cfg, const LogSink& log = {});

nlohmann::json to_json(const EvalReport& r);
std::string render_report(const nlohmann::json& report);
/// One CSV per table: clean.csv and attack_<kind>.csv.
void write_report_tables(const std::filesystem::path& dir, const nlohmann::json& report);

} // namespace maldef
