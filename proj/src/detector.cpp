#include "maldef/detector.hpp"

#include "maldef/error.hpp"
#include "maldef/parallel.hpp"

#include <algorithm>
#include <chrono>

namespace maldef {

ResizedImage prepare_input(const ByteSequence& bytes, const std::optional<PreprocessConfig>& preprocess,
                           std::size_t side) {
    if (preprocess) return bytes_to_input(maldef::preprocess(bytes, *preprocess).span(), side);
    return bytes_to_input(bytes.span(), side);
}

std::vector<LabeledImage> prepare_inputs(std::span<const Sample> samples,
                                         const std::optional<PreprocessConfig>& preprocess, std::size_t side) {
    std::vector<LabeledImage> out(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        out[i].image = prepare_input(samples[i].bytes, preprocess, side);
        out[i].label = samples[i].label;
    });
    return out;
}

ResizedImage Detector::model_input(std::span<const std::uint8_t> bytes) const {
    if (preprocess_) {
        const ByteSequence seq(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
        return bytes_to_input(maldef::preprocess(seq, *preprocess_).span(), model_->input_side());
    }
    return bytes_to_input(bytes, model_->input_side());
}

std::vector<double> Detector::predict(std::span<const std::uint8_t> bytes) const {
    return model_->forward(model_input(bytes));
}

std::size_t Detector::classify(std::span<const std::uint8_t> bytes) const {
    const auto z = model_->logits(model_input(bytes));
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::vector<std::int8_t> Detector::gradient_sign(std::span<const std::uint8_t> bytes, std::size_t label) const {
    std::vector<std::int8_t> sign(bytes.size(), 0);
    if (bytes.empty()) return sign;
    if (!preprocess_) return input_gradient(*model_, bytes, label).sign;
    const ByteSequence seq(std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    const auto kept = preprocess_with_offsets(seq, *preprocess_);
    if (kept.bytes.empty()) return sign;
    const auto g = input_gradient(*model_, kept.bytes.span(), label);
    for (std::size_t i = 0; i < g.sign.size(); ++i) sign[kept.source_offset[i]] = g.sign[i];
    return sign;
}

EvalReport evaluate(const Detector& detector, std::span<const Sample> samples) {
    if (samples.empty()) throw PreconditionError("evaluation needs at least one sample");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t C = detector.model().classes();
    std::vector<double> probs(samples.size() * C);
    std::vector<std::size_t> truth(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const auto p = detector.predict(samples[i].bytes.span());
        std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * C));
        truth[i] = samples[i].label;
    });
    const auto m = classification_metrics(truth, probs, C);
    EvalReport r;
    r.variant = detector.preprocess() ? "preprocessed" : "raw";
    r.condition = "clean";
    r.accuracy = m.accuracy;
    r.auc = m.auc;
    r.macro_f1 = m.macro_f1;
    r.sample_count = samples.size();
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

EvalReport evaluate(const Classifier& model, std::span<const Sample> samples, bool with_preprocess,
                    const PreprocessConfig& cfg) {
    return evaluate(Detector(model, with_preprocess ? std::optional<PreprocessConfig>(cfg) : std::nullopt), samples);
}

} // namespace maldef
