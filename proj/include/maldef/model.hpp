#pragma once

#include "maldef/bytes.hpp"
#include "maldef/imaging.hpp"
#include "maldef/preprocess.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maldef {

// conv3x3(8) relu maxpool2 conv3x3(16) relu maxpool2 dense(64) relu dense(C) softmax.
// Convolutions use zero "same" padding; pooling floors odd extents.
class Classifier {
public:
    static constexpr std::size_t conv1_filters = 8;
    static constexpr std::size_t conv2_filters = 16;
    static constexpr std::size_t hidden_units = 64;

    Classifier() = default;
    /// He-style uniform fan-in initialization, zero biases.
    Classifier(std::size_t input_side, std::size_t classes, std::uint64_t seed);

    std::size_t input_side() const noexcept { return input_side_; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }
    std::span<double> parameters() noexcept { return params_; }
    std::span<const double> parameters() const noexcept { return params_; }
    void set_parameters(std::vector<double> params);

    static std::vector<std::string> architecture();
    std::size_t flat_features() const noexcept;

    std::vector<double> logits(const ResizedImage& img) const;
    std::vector<double> forward(const ResizedImage& img) const;

    /// Which ReLU units are active and which pool inputs win. The loss is smooth
    /// in a neighbourhood where this stays fixed.
    std::vector<std::size_t> activation_pattern(const ResizedImage& img) const;

    /// Cross-entropy of one example. Adds d(loss)/d(params) into param_grad
    /// when it is non-empty and writes d(loss)/d(input pixels) into input_grad
    /// when given.
    double backprop(const ResizedImage& img, std::size_t label, std::span<double> param_grad,
                    std::vector<double>* input_grad = nullptr) const;

    // Offsets into the flat parameter vector.
    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3, w4, b4, total;
    };
    const Layout& layout() const noexcept { return layout_; }

    // Zeroes the final dense layer (weights and biases).
    void zero_output_layer();

    friend bool operator==(const Classifier& a, const Classifier& b) noexcept {
        return a.input_side_ == b.input_side_ && a.classes_ == b.classes_ && a.params_ == b.params_;
    }

private:
    void check_input(const ResizedImage& img) const;

    std::size_t input_side_ = 0;
    std::size_t classes_ = 0;
    Layout layout_{};
    std::vector<double> params_;
};

std::vector<double> softmax(std::span<const double> logits);
/// -ln p[label] for a probability vector.
double cross_entropy(std::span<const double> probs, std::size_t label);

struct LabeledImage {
    ResizedImage image;
    std::size_t label = 0;
};

/// Mean cross-entropy over a non-empty batch.
double loss(const Classifier& model, std::span<const LabeledImage> batch);

struct TrainConfig {
    double learning_rate = 0.1;
    double decay = 0.6;
    std::size_t decay_step = 5;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double clip_norm = 0.0;  // max L2 norm of the batch-mean gradient; 0 disables
    std::uint64_t seed = 1;

    static TrainConfig desk_scale() {
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.clip_norm = 5.0;
        return cfg;
    }
    void validate() const;
    double learning_rate_at(std::size_t epoch) const noexcept;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double validation_accuracy = 0.0;
};

struct TrainResult {
    Classifier model;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

/// Mini-batch SGD with step decay. Returns the parameters of the epoch with the
/// best validation accuracy (earliest on ties).
TrainResult train(const Classifier& init, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> validation_set, const TrainConfig& cfg);

double accuracy(const Classifier& model, std::span<const LabeledImage> set);

struct InputGradient {
    std::vector<double> pixel_gradient;  // d(loss)/d(resized input)
    std::vector<std::int8_t> sign;       // one entry per source byte
};

/// Backpropagates the loss to the model input, carries it through the adjoint
/// of the resize and reads off the per-byte gradient sign.
InputGradient input_gradient(const Classifier& model, std::span<const std::uint8_t> sample, std::size_t label);

// Checkpoint container: architecture, parameters as doubles, class count, training history.
struct Checkpoint {
    std::string tag;
    Classifier model;
    std::vector<EpochRecord> history;
    std::vector<std::string> class_names;
    std::optional<PreprocessConfig> preprocess;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace maldef
