#include "maldef/corpus.hpp"

#include "maldef/error.hpp"
#include "maldef/seed.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace maldef {

void CorpusManifest::validate() const {
    if (class_names.empty()) throw ManifestError("manifest declares no classes");
    if (counts.size() != class_names.size())
        throw ManifestError("manifest has " + std::to_string(counts.size()) + " counts for " +
                            std::to_string(class_names.size()) + " classes");
    if (ratios.size() != 3) throw ManifestError("manifest needs exactly three split ratios");
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw ManifestError("split ratios must be non-negative");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ManifestError("split ratios must sum to 1");
    std::set<std::string> names(class_names.begin(), class_names.end());
    if (names.size() != class_names.size()) throw ManifestError("class names must be unique");
}

CorpusManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot read manifest " + path.string());
    CorpusManifest m;
    try {
        nlohmann::json j;
        in >> j;
        m.class_names = j.at("classes").get<std::vector<std::string>>();
        m.counts = j.value("counts", std::vector<std::size_t>(m.class_names.size(), 0));
        if (j.contains("ratios")) m.ratios = j["ratios"].get<std::vector<double>>();
        m.seed = j.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("malformed manifest " + path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

void save_manifest(const fs::path& path, const CorpusManifest& m) {
    nlohmann::json j{{"classes", m.class_names}, {"counts", m.counts}, {"ratios", m.ratios}, {"seed", m.seed}};
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

ByteSequence read_binary_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot read file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw CorpusError("error while reading file " + path.string());
    return ByteSequence(std::move(bytes));
}

void write_binary_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

int hex_value(char c) noexcept {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace

ByteSequence parse_hexdump(std::string_view text) {
    std::vector<std::uint8_t> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;

        std::istringstream tokens{std::string(line)};
        std::string tok;
        if (!(tokens >> tok)) continue;  // blank line; first token is the address
        while (tokens >> tok) {
            if (tok == "??") {
                out.push_back(0x00);
                continue;
            }
            const int hi = tok.size() == 2 ? hex_value(tok[0]) : -1;
            const int lo = tok.size() == 2 ? hex_value(tok[1]) : -1;
            if (hi < 0 || lo < 0) throw ParseError("invalid byte token '" + tok + "'", line_no);
            out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
        }
    }
    return ByteSequence(std::move(out));
}

ByteSequence ingest_hexdump(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorpusError("cannot read file " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_hexdump(text);
}

std::vector<Sample> ingest_binary_dir(const fs::path& dir, const CorpusManifest& manifest) {
    if (manifest.class_names.empty()) throw ManifestError("manifest declares no classes");
    if (!fs::is_directory(dir)) throw CorpusError("corpus directory " + dir.string() + " does not exist");

    struct Entry {
        fs::path path;
        std::size_t label;
    };
    std::vector<Entry> entries;
    for (std::size_t label = 0; label < manifest.class_names.size(); ++label) {
        const auto& name = manifest.class_names[label];
        const fs::path class_dir = dir / name;
        if (!fs::is_directory(class_dir)) throw CorpusError("class directory missing for class '" + name + "'");
        std::size_t found = 0;
        for (const auto& e : fs::directory_iterator(class_dir)) {
            if (!e.is_regular_file()) continue;
            entries.push_back({e.path(), label});
            ++found;
        }
        if (found == 0) throw CorpusError("class directory for class '" + name + "' is empty");
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.path < b.path; });

    std::vector<Sample> samples;
    samples.reserve(entries.size());
    for (const auto& e : entries) {
        Sample s;
        s.bytes = e.path.extension() == ".bytes" ? ingest_hexdump(e.path) : read_binary_file(e.path);
        s.label = e.label;
        s.id = manifest.class_names[e.label] + "/" + e.path.filename().string();
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<std::vector<Motif>> motif_dictionaries(const CorpusManifest& manifest) {
    const std::size_t C = manifest.class_count();
    std::mt19937_64 rng(child_seed(manifest.seed, "motifs"));
    std::set<Motif> seen;
    std::vector<std::vector<Motif>> dicts(C);
    for (std::size_t k = 0; k < C; ++k) {
        // Each family draws its motif bytes from its own intensity band.
        const double center = C == 1 ? 128.0 : 40.0 + static_cast<double>(k) * 176.0 / static_cast<double>(C - 1);
        const int lo = std::max(0, static_cast<int>(center) - 40);
        const int hi = std::min(255, static_cast<int>(center) + 40);
        std::uniform_int_distribution<int> byte(lo, hi);
        while (dicts[k].size() < motifs_per_class) {
            Motif m;
            for (auto& b : m) b = static_cast<std::uint8_t>(byte(rng));
            if (seen.insert(m).second) dicts[k].push_back(m);
        }
    }
    return dicts;
}

namespace {

std::vector<std::uint8_t> synth_sample(const std::vector<Motif>& dict, const SynthesisProfile& p,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> any_byte(0, 255);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double log_lo = std::log(static_cast<double>(p.min_size));
    const double log_hi = std::log(static_cast<double>(p.max_size));
    const auto n = static_cast<std::size_t>(std::exp(log_lo + unit(rng) * (log_hi - log_lo)));

    // Filler: runs of one padding-style byte, each at least 2 * chunk_length long.
    const std::size_t min_run = 2 * p.chunk_length;
    const std::size_t filler = std::max(min_run, static_cast<std::size_t>(std::llround(p.filler_share * n)));
    const std::size_t runs = std::max<std::size_t>(1, filler / (3 * p.chunk_length));
    static constexpr std::uint8_t padding_values[] = {0x00, 0x00, 0x00, 0xCC, 0x90};
    std::uniform_int_distribution<std::size_t> pad_pick(0, std::size(padding_values) - 1);

    const std::size_t body_len = n > filler ? n - filler : 0;
    const auto random_target = static_cast<std::size_t>(std::llround(p.random_share * n));
    const std::size_t motif_count = body_len > random_target ? (body_len - random_target) / motif_length : 0;
    const std::size_t gap_total = body_len - motif_count * motif_length;

    // Split the random bytes into motif_count + 1 gaps at uniform cut points.
    std::vector<std::size_t> cuts(motif_count);
    std::uniform_int_distribution<std::size_t> cut(0, gap_total);
    for (auto& c : cuts) c = cut(rng);
    std::sort(cuts.begin(), cuts.end());

    std::vector<std::uint8_t> body;
    body.reserve(body_len);
    std::uniform_int_distribution<std::size_t> motif_pick(0, dict.size() - 1);
    std::size_t prev = 0;
    for (std::size_t i = 0; i <= motif_count; ++i) {
        const std::size_t next = i < motif_count ? cuts[i] : gap_total;
        for (std::size_t g = prev; g < next; ++g) body.push_back(static_cast<std::uint8_t>(any_byte(rng)));
        prev = next;
        if (i < motif_count) {
            const auto& m = dict[motif_pick(rng)];
            body.insert(body.end(), m.begin(), m.end());
        }
    }

    std::vector<std::size_t> at(runs);
    std::uniform_int_distribution<std::size_t> where(0, body.size());
    for (auto& a : at) a = where(rng);
    std::sort(at.begin(), at.end());

    std::vector<std::uint8_t> out;
    out.reserve(body.size() + filler);
    std::size_t cursor = 0;
    for (std::size_t r = 0; r < runs; ++r) {
        out.insert(out.end(), body.begin() + static_cast<std::ptrdiff_t>(cursor),
                   body.begin() + static_cast<std::ptrdiff_t>(at[r]));
        cursor = at[r];
        const std::size_t len = filler / runs + (r == 0 ? filler % runs : 0);
        out.insert(out.end(), len, padding_values[pad_pick(rng)]);
    }
    out.insert(out.end(), body.begin() + static_cast<std::ptrdiff_t>(cursor), body.end());
    return out;
}

} // namespace

std::vector<Sample> synth_corpus(const CorpusManifest& manifest, const SynthesisProfile& profile) {
    manifest.validate();
    if (manifest.class_count() < 2) throw ManifestError("synthetic corpus needs at least 2 classes");
    for (std::size_t k = 0; k < manifest.class_count(); ++k)
        if (manifest.counts[k] == 0)
            throw ManifestError("class '" + manifest.class_names[k] + "' needs at least one sample");
    if (profile.min_size == 0 || profile.max_size < profile.min_size)
        throw ManifestError("invalid synthetic size range");
    if (profile.chunk_length < 2) throw ManifestError("synthetic chunk length must be at least 2");

    const auto dicts = motif_dictionaries(manifest);
    std::vector<Sample> samples;
    for (std::size_t k = 0; k < manifest.class_count(); ++k) {
        for (std::size_t i = 0; i < manifest.counts[k]; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu.bin", i);
            Sample s;
            s.label = k;
            s.id = manifest.class_names[k] + "/" + name;
            s.bytes = ByteSequence(synth_sample(dicts[k], profile, child_seed(manifest.seed, s.id)));
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

void write_corpus(const fs::path& dir, const CorpusManifest& manifest, const std::vector<Sample>& samples) {
    fs::create_directories(dir);
    for (const auto& name : manifest.class_names) fs::create_directories(dir / name);
    for (const auto& s : samples) {
        const auto slash = s.id.find('/');
        const std::string file = slash == std::string::npos ? s.id : s.id.substr(slash + 1);
        write_binary_file(dir / manifest.class_names.at(s.label) / file, s.bytes.span());
    }
    save_manifest(dir / "manifest.json", manifest);
}

Split split(const std::vector<Sample>& samples, const CorpusManifest& manifest) {
    manifest.validate();
    if (samples.empty()) throw PreconditionError("cannot split an empty sample list");
    Split out;
    std::vector<std::vector<const Sample*>> by_class(manifest.class_count());
    for (const auto& s : samples) {
        if (s.label >= manifest.class_count())
            throw CorpusError("sample " + s.id + " has label outside the manifest");
        by_class[s.label].push_back(&s);
    }
    std::mt19937_64 rng(child_seed(manifest.seed, "split"));
    for (std::size_t k = 0; k < by_class.size(); ++k) {
        auto& members = by_class[k];
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t n = members.size();
        if (n == 0) continue;
        std::size_t sizes[3];
        if (n < 3) {
            out.warnings.push_back("class '" + manifest.class_names[k] + "' has " + std::to_string(n) +
                                   " samples; placed wholly in train");
            sizes[0] = n;
            sizes[1] = sizes[2] = 0;
        } else {
            std::size_t assigned = 0;
            for (int i = 0; i < 3; ++i) {
                sizes[i] = static_cast<std::size_t>(std::floor(manifest.ratios[i] * static_cast<double>(n) + 1e-9));
                assigned += sizes[i];
            }
            for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++sizes[r % 2];
        }
        std::size_t pos = 0;
        std::vector<Sample>* dest[3] = {&out.train, &out.validation, &out.test};
        for (int i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < sizes[i]; ++j) dest[i]->push_back(*members[pos++]);
    }
    return out;
}

std::vector<Sample> attack_subset(const std::vector<Sample>& test, std::size_t n, std::uint64_t seed) {
    if (n >= test.size()) return test;
    std::vector<std::size_t> idx(test.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    std::vector<Sample> out;
    out.reserve(n);
    for (std::size_t i : idx) out.push_back(test[i]);
    return out;
}

} // namespace maldef
