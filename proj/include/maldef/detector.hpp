#pragma once

#include "maldef/corpus.hpp"
#include "maldef/imaging.hpp"
#include "maldef/metrics.hpp"
#include "maldef/model.hpp"
#include "maldef/preprocess.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maldef {

// A deployed detector: optional entropy filter in front of bytes -> image -> resize -> model.
class Detector {
public:
    Detector(const Classifier& model, std::optional<PreprocessConfig> preprocess)
        : model_(&model), preprocess_(std::move(preprocess)) {}

    const Classifier& model() const noexcept { return *model_; }
    const std::optional<PreprocessConfig>& preprocess() const noexcept { return preprocess_; }

    ResizedImage model_input(std::span<const std::uint8_t> bytes) const;
    std::vector<double> predict(std::span<const std::uint8_t> bytes) const;
    std::size_t classify(std::span<const std::uint8_t> bytes) const;

    /// Loss-gradient sign per input byte through the whole pipeline. Bytes the
    /// filter drops get 0.
    std::vector<std::int8_t> gradient_sign(std::span<const std::uint8_t> bytes, std::size_t label) const;

private:
    const Classifier* model_;
    std::optional<PreprocessConfig> preprocess_;
};

/// Model input for a sample, with or without the entropy filter.
ResizedImage prepare_input(const ByteSequence& bytes, const std::optional<PreprocessConfig>& preprocess,
                           std::size_t side);

std::vector<LabeledImage> prepare_inputs(std::span<const Sample> samples,
                                         const std::optional<PreprocessConfig>& preprocess, std::size_t side);

/// Accuracy, AUC and macro-F1 of the pipeline over samples.
EvalReport evaluate(const Classifier& model, std::span<const Sample> samples, bool with_preprocess,
                    const PreprocessConfig& cfg);
EvalReport evaluate(const Detector& detector, std::span<const Sample> samples);

} // namespace maldef
