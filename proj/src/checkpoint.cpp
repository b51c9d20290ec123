#include "maldef/error.hpp"
#include "maldef/model.hpp"

#include <json.hpp>

#include <fstream>

namespace maldef {

namespace {
constexpr const char* kFormat = "maldef-checkpoint";
constexpr int kVersion = 1;
} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["tag"] = ckpt.tag;
    j["architecture"] = Classifier::architecture();
    j["input_side"] = ckpt.model.input_side();
    j["classes"] = ckpt.model.classes();
    j["class_names"] = ckpt.class_names;
    if (ckpt.preprocess) {
        j["preprocess"] = {{"threshold", ckpt.preprocess->threshold},
                           {"chunk_length", ckpt.preprocess->chunk_length},
                           {"keep_partial_tail", ckpt.preprocess->keep_partial_tail}};
    } else {
        j["preprocess"] = nullptr;
    }
    auto& hist = j["history"] = nlohmann::json::array();
    for (const auto& e : ckpt.history)
        hist.push_back({{"epoch", e.epoch},
                        {"learning_rate", e.learning_rate},
                        {"train_loss", e.train_loss},
                        {"validation_accuracy", e.validation_accuracy}});
    const auto params = ckpt.model.parameters();
    j["parameters"] = std::vector<double>(params.begin(), params.end());

    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << j.dump();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != kFormat) throw Error(path.string() + " is not a checkpoint");
    if (j.value("version", 0) != kVersion)
        throw Error("unsupported checkpoint version in " + path.string());
    if (j.at("architecture").get<std::vector<std::string>>() != Classifier::architecture())
        throw Error("checkpoint architecture does not match this build");

    Checkpoint ckpt;
    ckpt.tag = j.value("tag", "");
    ckpt.model = Classifier(j.at("input_side").get<std::size_t>(), j.at("classes").get<std::size_t>(), 0);
    ckpt.model.set_parameters(j.at("parameters").get<std::vector<double>>());
    ckpt.class_names = j.value("class_names", std::vector<std::string>{});
    if (!j.at("preprocess").is_null()) {
        const auto& p = j["preprocess"];
        PreprocessConfig cfg;
        cfg.threshold = p.at("threshold").get<double>();
        cfg.chunk_length = p.at("chunk_length").get<std::size_t>();
        cfg.keep_partial_tail = p.at("keep_partial_tail").get<bool>();
        ckpt.preprocess = cfg;
    }
    for (const auto& e : j.at("history"))
        ckpt.history.push_back({e.at("epoch").get<std::size_t>(), e.at("learning_rate").get<double>(),
                                e.at("train_loss").get<double>(), e.at("validation_accuracy").get<double>()});
    return ckpt;
}

} // namespace maldef
