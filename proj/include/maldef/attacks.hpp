#pragma once

#include "maldef/bytes.hpp"
#include "maldef/corpus.hpp"
#include "maldef/detector.hpp"
#include "maldef/metrics.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maldef {

enum class AttackKind { gamma, baraf, copycat };

std::string_view to_string(AttackKind kind) noexcept;
AttackKind parse_attack_kind(std::string_view name);

struct AttackConfig {
    AttackKind kind = AttackKind::baraf;
    double budget = 0.2;  // appended bytes as a fraction of the original length

    // genetic search
    std::size_t iterations = 20;
    std::size_t population = 50;
    double crossover = 0.7;
    double mutation = 0.8;
    std::size_t donors = 5;
    std::size_t tournament = 3;

    double copycat_strength = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Black-box access: class probabilities for a byte sequence, nothing else.
using ProbabilityOracle = std::function<std::vector<double>(std::span<const std::uint8_t>)>;

/// Appends round(budget * len) bytes of 0xFF.
ByteSequence attack_baraf(const ByteSequence& x, const AttackConfig& cfg);

/// Appends the tail round(budget * len) bytes of the gradient-sign step of x.
ByteSequence attack_copycat(const ByteSequence& x, std::size_t label, const Detector& detector,
                            const AttackConfig& cfg);

struct GammaTrace {
    std::size_t oracle_calls = 0;
    std::vector<double> best_fitness;  // after initialization, then after each generation
    std::vector<double> best_genome;
    std::size_t appended = 0;
    double original_fitness = 0.0;
};

/// Genetic search over per-donor fractions of appended donor content, minimizing
/// the oracle's probability of the true class. Throws PreconditionError on an
/// empty donor pool.
ByteSequence attack_gamma(const ByteSequence& x, std::size_t label, const ProbabilityOracle& oracle,
                          std::span<const ByteSequence> donor_pool, const AttackConfig& cfg,
                          const std::string& sample_id = {}, GammaTrace* trace = nullptr);

// Phenotype of a genome: x followed by floor(g_j * budget * len / k) bytes of donor block j.
ByteSequence gamma_phenotype(const ByteSequence& x, std::span<const double> genome,
                             std::span<const std::vector<std::uint8_t>> blocks, double budget);

struct AttackTarget {
    std::string tag;  // OM, P+OM, P+ATM
    Detector detector;
};

struct AttackTable {
    AttackKind kind = AttackKind::baraf;
    std::vector<double> budgets;
    std::vector<std::string> rows;             // one per target
    std::vector<std::vector<EvalReport>> cells;  // [row][budget]
};

// Donor pool for a sample with the given label.
using DonorProvider = std::function<std::span<const ByteSequence>(std::size_t label)>;

/// Attacks every subset sample for every (target, budget) and records
/// post-attack metrics.
AttackTable run_attack_suite(std::span<const AttackTarget> targets, std::span<const Sample> subset,
                             std::span<const double> budgets, const AttackConfig& base,
                             const DonorProvider& donors);

} // namespace maldef
