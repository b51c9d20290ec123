#pragma once

#include "maldef/bytes.hpp"
#include "maldef/detector.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maldef {

struct PerturbSpec {
    std::size_t indexs = 2;   // injection sites per attempt
    double sizes = 0.2;       // max injected fraction of the file length
    double eta = 0.3;         // gradient step, normalized pixel units
    std::size_t retries = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Generator { random_bytes, gradient_bytes };
enum class Injection { replace, insert };

std::string_view to_string(Generator g) noexcept;
std::string_view to_string(Injection op) noexcept;

struct AdvSample {
    ByteSequence bytes;
    std::string parent_id;
    Generator generator = Generator::random_bytes;
    Injection operation = Injection::replace;
    bool fooled = false;
};

/// i.i.d. uniform bytes. Throws PreconditionError for length 0.
ByteSequence gen_random_perturbation(std::size_t length, std::uint64_t seed);

/// s_i = clamp(x_i + eta * 255 * sign_i, 0, 255), rounded half up.
ByteSequence apply_gradient_step(std::span<const std::uint8_t> x, std::span<const std::int8_t> sign, double eta);

/// Gradient-sign step on x using the detector's loss gradient for `label`.
ByteSequence gen_gradient_perturbation(std::span<const std::uint8_t> x, const Detector& detector,
                                       std::size_t label, double eta);

ByteSequence inject_replace(const ByteSequence& x, std::size_t index, std::span<const std::uint8_t> block);
ByteSequence inject_insert(const ByteSequence& x, std::size_t index, std::span<const std::uint8_t> block);

// Planned injection for one attempt: sites in descending order with the block
// length at each site.
struct InjectionPlan {
    std::vector<std::size_t> sites;
    std::vector<std::size_t> lengths;
    Injection operation = Injection::replace;
};

/// Even split of total across sites; the remainder goes to the lowest offsets.
std::vector<std::size_t> split_budget(std::size_t total, std::span<const std::size_t> sites_descending);

/// Applies blocks[i] at sites[i]; sites must be descending.
ByteSequence apply_injections(const ByteSequence& x, std::span<const std::size_t> sites,
                              std::span<const std::vector<std::uint8_t>> blocks, Injection op);

struct GenerationStats {
    std::size_t attempts = 0;
    std::size_t candidates = 0;
};

/// Stochastic adversarial-example generation. Each attempt draws sites, a size
/// and an operation, builds a random-content and a gradient-content candidate
/// and keeps those the detector misclassifies. Stops after the first attempt
/// that fools the detector or after spec.retries attempts.
std::vector<AdvSample> generate_adversarial(const ByteSequence& x, std::size_t label, const std::string& id,
                                            const Detector& detector, const PerturbSpec& spec,
                                            GenerationStats* stats = nullptr);

} // namespace maldef
