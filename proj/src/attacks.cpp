#include "maldef/attacks.hpp"

#include "maldef/error.hpp"
#include "maldef/parallel.hpp"
#include "maldef/perturb.hpp"
#include "maldef/seed.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace maldef {

std::string_view to_string(AttackKind kind) noexcept {
    switch (kind) {
    case AttackKind::gamma: return "gamma";
    case AttackKind::baraf: return "baraf";
    case AttackKind::copycat: return "copycat";
    }
    return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
    if (name == "gamma") return AttackKind::gamma;
    if (name == "baraf") return AttackKind::baraf;
    if (name == "copycat") return AttackKind::copycat;
    throw ManifestError("unknown attack kind '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
    if (!(budget >= 0.0 && budget <= 1.0)) throw ManifestError("attack budget must lie in [0, 1]");
    if (iterations == 0 || population < 2) throw ManifestError("genetic search needs iterations >= 1, population >= 2");
    if (!(crossover >= 0.0 && crossover <= 1.0) || !(mutation >= 0.0 && mutation <= 1.0))
        throw ManifestError("crossover and mutation probabilities must lie in [0, 1]");
    if (donors == 0 || tournament == 0) throw ManifestError("donors and tournament size must be positive");
    if (!(copycat_strength >= 0.0 && copycat_strength <= 1.0))
        throw ManifestError("copycat strength must lie in [0, 1]");
}

namespace {

std::size_t budget_bytes(std::size_t n, double budget) {
    return static_cast<std::size_t>(std::llround(budget * static_cast<double>(n)));
}

} // namespace

ByteSequence attack_baraf(const ByteSequence& x, const AttackConfig& cfg) {
    if (x.empty()) throw PreconditionError("cannot attack an empty sample");
    std::vector<std::uint8_t> out = x.vec();
    out.insert(out.end(), budget_bytes(x.size(), cfg.budget), 0xFF);
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence attack_copycat(const ByteSequence& x, std::size_t label, const Detector& detector,
                            const AttackConfig& cfg) {
    if (x.empty()) throw PreconditionError("cannot attack an empty sample");
    const std::size_t extra = budget_bytes(x.size(), cfg.budget);
    std::vector<std::uint8_t> out = x.vec();
    if (extra == 0) return ByteSequence(std::move(out), Provenance::adversarial);
    const ByteSequence s = gen_gradient_perturbation(x.span(), detector, label, cfg.copycat_strength);
    out.insert(out.end(), s.vec().end() - static_cast<std::ptrdiff_t>(extra), s.vec().end());
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence gamma_phenotype(const ByteSequence& x, std::span<const double> genome,
                             std::span<const std::vector<std::uint8_t>> blocks, double budget) {
    if (genome.size() != blocks.size()) throw ShapeError("one gene per donor block required");
    const double per_block = budget * static_cast<double>(x.size()) / static_cast<double>(genome.size());
    std::vector<std::uint8_t> out = x.vec();
    for (std::size_t j = 0; j < genome.size(); ++j) {
        const auto len = std::min(blocks[j].size(),
                                  static_cast<std::size_t>(std::floor(std::clamp(genome[j], 0.0, 1.0) * per_block)));
        out.insert(out.end(), blocks[j].begin(), blocks[j].begin() + static_cast<std::ptrdiff_t>(len));
    }
    return ByteSequence(std::move(out), Provenance::adversarial);
}

ByteSequence attack_gamma(const ByteSequence& x, std::size_t label, const ProbabilityOracle& oracle,
                          std::span<const ByteSequence> donor_pool, const AttackConfig& cfg,
                          const std::string& sample_id, GammaTrace* trace) {
    cfg.validate();
    if (x.empty()) throw PreconditionError("cannot attack an empty sample");
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < donor_pool.size(); ++i)
        if (!donor_pool[i].empty()) usable.push_back(i);
    if (usable.empty()) throw PreconditionError("GAMMA needs a non-empty benign donor pool");

    std::mt19937_64 rng(child_seed(child_seed(cfg.seed, "gamma"), sample_id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Harvest one contiguous block per donor, long enough for a full gene.
    const std::size_t k = cfg.donors;
    const auto block_len = static_cast<std::size_t>(
        std::floor(cfg.budget * static_cast<double>(x.size()) / static_cast<double>(k)));
    std::vector<std::vector<std::uint8_t>> blocks(k);
    std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
    for (auto& block : blocks) {
        const auto& donor = donor_pool[usable[pick(rng)]];
        std::uniform_int_distribution<std::size_t> start(0, donor.size() - 1);
        const std::size_t s = start(rng);
        block.resize(block_len);
        for (std::size_t i = 0; i < block_len; ++i) block[i] = donor[(s + i) % donor.size()];
    }

    std::size_t calls = 0;
    auto fitness = [&](const std::vector<double>& genome) {
        ++calls;
        const auto p = oracle(gamma_phenotype(x, genome, blocks, cfg.budget).span());
        if (label >= p.size()) throw PreconditionError("oracle returned too few class scores");
        return p[label];
    };

    const std::size_t P = cfg.population;
    std::vector<std::vector<double>> pop(P, std::vector<double>(k, 0.0));
    // individual 0 is the unmodified sample
    for (std::size_t i = 1; i < P; ++i)
        for (auto& g : pop[i]) g = unit(rng);
    std::vector<double> fit(P);
    for (std::size_t i = 0; i < P; ++i) fit[i] = fitness(pop[i]);
    const double original = fit[0];

    auto best_index = [&] {
        return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin());
    };
    std::vector<double> history{fit[best_index()]};

    std::uniform_int_distribution<std::size_t> any(0, P - 1);
    auto tournament = [&]() -> std::size_t {
        std::size_t best = any(rng);
        for (std::size_t t = 1; t < cfg.tournament; ++t) {
            const std::size_t c = any(rng);
            if (fit[c] < fit[best]) best = c;
        }
        return best;
    };

    for (std::size_t gen = 0; gen < cfg.iterations; ++gen) {
        const std::size_t elite = best_index();
        std::vector<std::vector<double>> next{pop[elite]};
        std::vector<double> next_fit{fit[elite]};
        while (next.size() < P) {
            const auto& a = pop[tournament()];
            const auto& b = pop[tournament()];
            std::vector<double> child = a;
            if (unit(rng) < cfg.crossover)
                for (std::size_t g = 0; g < k; ++g)
                    if (unit(rng) < 0.5) child[g] = b[g];
            for (auto& g : child)
                if (unit(rng) < cfg.mutation) g = unit(rng);
            next_fit.push_back(fitness(child));
            next.push_back(std::move(child));
        }
        pop = std::move(next);
        fit = std::move(next_fit);
        history.push_back(fit[best_index()]);
    }

    const std::size_t best = best_index();
    ByteSequence out = gamma_phenotype(x, pop[best], blocks, cfg.budget);
    if (trace) {
        trace->oracle_calls = calls;
        trace->best_fitness = std::move(history);
        trace->best_genome = pop[best];
        trace->appended = out.size() - x.size();
        trace->original_fitness = original;
    }
    return out;
}

AttackTable run_attack_suite(std::span<const AttackTarget> targets, std::span<const Sample> subset,
                             std::span<const double> budgets, const AttackConfig& base,
                             const DonorProvider& donors) {
    base.validate();
    if (subset.empty()) throw PreconditionError("attack subset is empty");
    AttackTable table;
    table.kind = base.kind;
    table.budgets.assign(budgets.begin(), budgets.end());
    for (const auto& t : targets) table.rows.push_back(t.tag);
    table.cells.assign(targets.size(), std::vector<EvalReport>(budgets.size()));

    for (std::size_t b = 0; b < budgets.size(); ++b) {
        AttackConfig cfg = base;
        cfg.budget = budgets[b];
        std::ostringstream cond;
        cond << to_string(cfg.kind) << '@' << budgets[b];

        // BARAF ignores the model, so one attacked copy serves every target.
        std::vector<ByteSequence> shared;
        if (cfg.kind == AttackKind::baraf) {
            shared.resize(subset.size());
            parallel_for(subset.size(), [&](std::size_t i) { shared[i] = attack_baraf(subset[i].bytes, cfg); });
        }

        for (std::size_t r = 0; r < targets.size(); ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            const Detector& det = targets[r].detector;
            const std::size_t C = det.model().classes();
            std::vector<double> probs(subset.size() * C);
            std::vector<std::size_t> truth(subset.size());
            parallel_for(subset.size(), [&](std::size_t i) {
                const Sample& s = subset[i];
                ByteSequence attacked;
                switch (cfg.kind) {
                case AttackKind::baraf: attacked = shared[i]; break;
                case AttackKind::copycat: attacked = attack_copycat(s.bytes, s.label, det, cfg); break;
                case AttackKind::gamma: {
                    const ProbabilityOracle oracle = [&det](std::span<const std::uint8_t> bytes) {
                        return det.predict(bytes);
                    };
                    attacked = attack_gamma(s.bytes, s.label, oracle, donors(s.label), cfg, s.id);
                    break;
                }
                }
                const auto p = det.predict(attacked.span());
                std::copy(p.begin(), p.end(), probs.begin() + static_cast<std::ptrdiff_t>(i * C));
                truth[i] = s.label;
            });
            const auto m = classification_metrics(truth, probs, C);
            auto& cell = table.cells[r][b];
            cell.variant = targets[r].tag;
            cell.condition = cond.str();
            cell.accuracy = m.accuracy;
            cell.auc = m.auc;
            cell.macro_f1 = m.macro_f1;
            cell.sample_count = subset.size();
            cell.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    }
    return table;
}

} // namespace maldef
