#pragma once

// Protocol table sampling, strength labels and the dataset pipeline with
// bit-exact sidecar replay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "turbsim/counter_rng.hpp"
#include "turbsim/degrade.hpp"
#include "turbsim/error.hpp"
#include "turbsim/image_io.hpp"
#include "turbsim/keyvalue.hpp"
#include "turbsim/optics.hpp"
#include "turbsim/parallel.hpp"

namespace turbsim {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Range&) const = default;
};

/// Cn2 is stored in units of 1e-14 m^(-2/3).
struct ProtocolRow {
    Range distance_m;
    Range focal_length_m;
    std::vector<double> f_numbers;
    Range scene_width_m;
    Range cn2_e14;
    bool operator==(const ProtocolRow&) const = default;
};

struct ProtocolTable {
    std::vector<ProtocolRow> rows;

    static ProtocolTable standard() {
        return {{
            {{200, 400}, {1, 2}, {8, 11}, {0.2, 0.5}, {3, 7}},
            {{200, 400}, {1, 2}, {5.6, 8, 11}, {0.5, 1}, {6, 30}},
            {{400, 600}, {1, 2.5}, {8, 11, 16}, {0.4, 0.8}, {2, 6}},
            {{400, 600}, {1, 2.5}, {5.6, 8, 11}, {0.8, 1.5}, {6, 30}},
            {{600, 800}, {1, 3}, {11, 16}, {0.5, 1.2}, {2, 5}},
            {{600, 800}, {1, 3}, {8, 11}, {1.2, 2}, {5, 30}},
        }};
    }
    bool operator==(const ProtocolTable&) const = default;
};

inline void validate(const ProtocolTable& t) {
    require(!t.rows.empty(), ErrorKind::domain, "protocol table is empty");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string where = "protocol table row " + std::to_string(r + 1) + ": ";
        for (const Range* g : {&row.distance_m, &row.focal_length_m, &row.scene_width_m, &row.cn2_e14})
            require(std::isfinite(g->lo) && std::isfinite(g->hi) && g->lo < g->hi && g->lo > 0.0, ErrorKind::domain,
                    where + "ranges need 0 < lo < hi");
        require(!row.f_numbers.empty(), ErrorKind::domain, where + "empty f-number set");
        for (double f : row.f_numbers) require(f > 0.0 && std::isfinite(f), ErrorKind::domain, where + "bad f-number");
    }
}

namespace detail {
inline std::string join_numbers(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + KeyValueDoc::format_double(v[i]);
    return s;
}
inline std::vector<double> split_numbers(const std::string& s, const std::string& key) {
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(KeyValueDoc::parse_double(tok, key));
    return out;
}
inline Range parse_range(const KeyValueDoc& d, const std::string& key) {
    const auto v = split_numbers(d.get(key), key);
    require(v.size() == 2, ErrorKind::format, "'" + key + "' needs two numbers (lo hi)");
    return {v[0], v[1]};
}
}  // namespace detail

/// Table file: `rows = N` then, per row r, keys row<r>.distance_m,
/// row<r>.focal_length_m, row<r>.scene_width_m, row<r>.cn2_e14 ("lo hi")
/// and row<r>.f_numbers (space separated set).
inline KeyValueDoc to_keyvalue(const ProtocolTable& t) {
    KeyValueDoc d;
    d.set("rows", static_cast<int>(t.rows.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string p = "row" + std::to_string(r + 1) + ".";
        d.set(p + "distance_m", detail::join_numbers({row.distance_m.lo, row.distance_m.hi}));
        d.set(p + "focal_length_m", detail::join_numbers({row.focal_length_m.lo, row.focal_length_m.hi}));
        d.set(p + "f_numbers", detail::join_numbers(row.f_numbers));
        d.set(p + "scene_width_m", detail::join_numbers({row.scene_width_m.lo, row.scene_width_m.hi}));
        d.set(p + "cn2_e14", detail::join_numbers({row.cn2_e14.lo, row.cn2_e14.hi}));
    }
    return d;
}

inline ProtocolTable table_from_keyvalue(const KeyValueDoc& d) {
    ProtocolTable t;
    const int n = d.get_int("rows");
    require(n >= 0 && n <= 1000, ErrorKind::format, "bad row count");
    for (int r = 1; r <= n; ++r) {
        const std::string p = "row" + std::to_string(r) + ".";
        ProtocolRow row;
        row.distance_m = detail::parse_range(d, p + "distance_m");
        row.focal_length_m = detail::parse_range(d, p + "focal_length_m");
        row.f_numbers = detail::split_numbers(d.get(p + "f_numbers"), p + "f_numbers");
        row.scene_width_m = detail::parse_range(d, p + "scene_width_m");
        row.cn2_e14 = detail::parse_range(d, p + "cn2_e14");
        t.rows.push_back(std::move(row));
    }
    validate(t);
    return t;
}

/// Raster, wavelength and noise level are not part of the table.
struct ProtocolDefaults {
    int height = 256;
    int width = 256;
    double wavelength_m = kDefaultWavelength;
    double noise_sigma = 0.01;
};

struct SampledProtocol {
    TurbulenceProtocol protocol;
    int row = 0;  // 0-based
};

/// One row uniformly, then each field uniformly within it. Draw order:
/// row, distance, focal length, f-number, scene width, Cn2.
inline SampledProtocol sample_protocol(const ProtocolTable& t, CounterStream& rng, const ProtocolDefaults& def = {}) {
    validate(t);
    SampledProtocol s;
    s.row = static_cast<int>(rng.below(t.rows.size()));
    const auto& row = t.rows[s.row];
    auto& p = s.protocol;
    p.distance_m = rng.uniform(row.distance_m.lo, row.distance_m.hi);
    p.focal_length_m = rng.uniform(row.focal_length_m.lo, row.focal_length_m.hi);
    p.f_number = row.f_numbers[rng.below(row.f_numbers.size())];
    p.scene_width_m = rng.uniform(row.scene_width_m.lo, row.scene_width_m.hi);
    p.cn2 = rng.uniform(row.cn2_e14.lo, row.cn2_e14.hi) * 1e-14;
    p.wavelength_m = def.wavelength_m;
    p.image_height_px = def.height;
    p.image_width_px = def.width;
    p.noise_sigma = def.noise_sigma;
    validate(p);
    return s;
}

enum class Strength { weak, medium, strong };

inline const char* strength_name(Strength s) {
    switch (s) {
        case Strength::weak: return "weak";
        case Strength::medium: return "medium";
        case Strength::strong: return "strong";
    }
    return "?";
}

inline Strength parse_strength(const std::string& s) {
    if (s == "weak") return Strength::weak;
    if (s == "medium") return Strength::medium;
    if (s == "strong") return Strength::strong;
    throw Error(ErrorKind::format, "unknown strength label '" + s + "'");
}

struct StrengthThresholds {
    double weak_max = 2.0;
    double medium_max = 4.0;
};

struct StrengthLabel {
    Strength level = Strength::weak;
    double d_over_r0 = 0.0;
};

inline StrengthLabel classify_strength(const TurbulenceProtocol& p, const StrengthThresholds& th = {}) {
    validate(p);
    const double d = d_over_r0(p);
    Strength s = Strength::strong;
    if (d <= th.weak_max)
        s = Strength::weak;
    else if (d <= th.medium_max)
        s = Strength::medium;
    return {s, d};
}

// ---------------------------------------------------------------------------
// Sidecars
// ---------------------------------------------------------------------------

inline constexpr int kSidecarVersion = 1;
inline constexpr const char* kSidecarFormat = "turbsim-sidecar";

struct SampleSidecar {
    TurbulenceProtocol protocol;
    WhiteNoiseSeed field_seed;
    std::uint64_t noise_seed = 0;
    std::string noise_generator_id{kGeneratorId};
    std::string basis_hash;
    StrengthLabel label;
    int table_row = 0;  // 1-based, 0 when not drawn from a table
    std::uint64_t sample_index = 0;
    std::string source;
};

inline KeyValueDoc to_keyvalue(const SampleSidecar& s) {
    KeyValueDoc d;
    d.set("format", kSidecarFormat);
    d.set("version", kSidecarVersion);
    const auto proto = to_keyvalue(s.protocol);
    for (const auto& [k, v] : proto.entries()) d.set(k, v);
    d.set("field_seed", s.field_seed.seed);
    d.set("field_generator", s.field_seed.generator_id);
    d.set("noise_seed", s.noise_seed);
    d.set("noise_generator", s.noise_generator_id);
    d.set("basis_hash", s.basis_hash);
    d.set("strength", strength_name(s.label.level));
    d.set("d_over_r0", s.label.d_over_r0);
    d.set("table_row", s.table_row);
    d.set("sample_index", s.sample_index);
    d.set("source", s.source);
    return d;
}

inline SampleSidecar sidecar_from_keyvalue(const KeyValueDoc& d) {
    require(d.has("format") && d.get("format") == kSidecarFormat, ErrorKind::format, "not a sidecar file");
    const int v = d.get_int("version");
    require(v == kSidecarVersion, ErrorKind::version, "unsupported sidecar version " + std::to_string(v));
    SampleSidecar s;
    s.protocol = protocol_from_keyvalue(d);
    s.field_seed = {d.get_u64("field_seed"), d.get("field_generator")};
    s.noise_seed = d.get_u64("noise_seed");
    s.noise_generator_id = d.get("noise_generator");
    s.basis_hash = d.get("basis_hash");
    s.label = {parse_strength(d.get("strength")), d.get_double("d_over_r0")};
    s.table_row = d.get_int("table_row");
    s.sample_index = d.get_u64("sample_index");
    s.source = d.get("source");
    return s;
}

inline void save_sidecar(const std::string& path, const SampleSidecar& s) { to_keyvalue(s).save(path); }
inline SampleSidecar load_sidecar(const std::string& path) { return sidecar_from_keyvalue(KeyValueDoc::load(path)); }

/// Checks version drift, then rebuilds the realization the sidecar names.
inline DegradationRealization realize_from_sidecar(const SampleSidecar& s, const BasisBundle& bundle, int workers = 1) {
    require(s.basis_hash == bundle.hash, ErrorKind::version,
            "basis hash mismatch: sidecar " + s.basis_hash + ", installed " + bundle.hash);
    require(s.field_seed.generator_id == kGeneratorId, ErrorKind::version,
            "unknown field generator '" + s.field_seed.generator_id + "'");
    require(s.noise_generator_id == kGeneratorId, ErrorKind::version,
            "unknown noise generator '" + s.noise_generator_id + "'");
    return realize(s.protocol, s.field_seed, bundle, s.noise_seed, workers);
}

/// Re-degrades `clean`; bit-identical to the stored degraded raw planes.
inline ImageBuffer reproduce_sample(const SampleSidecar& s, const ImageBuffer& clean, const BasisBundle& bundle,
                                    int workers = 1) {
    const auto r = realize_from_sidecar(s, bundle, workers);
    return round_to_f32(simulate_forward(clean, r, Noise::include, workers));
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

enum SeedPurpose : std::uint64_t { kPurposeProtocol = 1, kPurposeField = 2, kPurposeNoise = 3 };

struct DatasetConfig {
    std::string src_dir;
    std::string out_dir;
    std::uint64_t n_samples = 0;
    std::uint64_t master_seed = 0;
    ProtocolTable table = ProtocolTable::standard();
    ProtocolDefaults defaults;
    StrengthThresholds thresholds;
    bool write_png = true;
    int workers = 1;
};

struct ManifestEntry {
    std::uint64_t index = 0;
    std::string clean;
    std::string degraded;
    std::string sidecar;
    std::string source;
    Strength label = Strength::weak;
    double d_over_r0 = 0.0;
    int table_row = 0;
    std::uint64_t field_seed = 0;
    std::uint64_t noise_seed = 0;
};

inline nlohmann::ordered_json to_json(const ManifestEntry& e) {
    nlohmann::ordered_json j;
    j["index"] = e.index;
    j["clean"] = e.clean;
    j["degraded"] = e.degraded;
    j["sidecar"] = e.sidecar;
    j["source"] = e.source;
    j["label"] = strength_name(e.label);
    j["d_over_r0"] = e.d_over_r0;
    j["table_row"] = e.table_row;
    j["field_seed"] = e.field_seed;
    j["noise_seed"] = e.noise_seed;
    return j;
}

/// PNG and raw image files directly inside `dir`, sorted by name.
inline std::vector<std::filesystem::path> list_source_images(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    require(fs::is_directory(dir, ec), ErrorKind::io, "source directory not readable: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".raw") out.push_back(e.path());
    }
    require(!ec, ErrorKind::io, "cannot list " + dir + ": " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::string sample_stem(std::uint64_t index) {
    std::string s = std::to_string(index);
    return "sample_" + std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

/// Per-sample seeds are derived from (master_seed, index), so the output does
/// not depend on the worker count. Writes the manifest last.
inline std::vector<ManifestEntry> generate_dataset(const DatasetConfig& cfg, const BasisBundle& bundle) {
    namespace fs = std::filesystem;
    validate(cfg.table);
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    require(!ec && fs::is_directory(cfg.out_dir), ErrorKind::io, "output directory not writable: " + cfg.out_dir);
    std::vector<ManifestEntry> entries(cfg.n_samples);
    if (cfg.n_samples > 0) {
        const auto sources = list_source_images(cfg.src_dir);
        require(!sources.empty(), ErrorKind::io, "no PNG or raw images in " + cfg.src_dir);
        parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
            const auto& src = sources[i % sources.size()];
            CounterStream rng(derive_seed(cfg.master_seed, i, kPurposeProtocol), 0);
            const auto drawn = sample_protocol(cfg.table, rng, cfg.defaults);
            SampleSidecar sc;
            sc.protocol = drawn.protocol;
            sc.field_seed = {derive_seed(cfg.master_seed, i, kPurposeField), std::string(kGeneratorId)};
            sc.noise_seed = derive_seed(cfg.master_seed, i, kPurposeNoise);
            sc.basis_hash = bundle.hash;
            sc.label = classify_strength(drawn.protocol, cfg.thresholds);
            sc.table_row = drawn.row + 1;
            sc.sample_index = i;
            sc.source = src.filename().string();

            const auto clean = round_to_f32(
                center_crop(read_image(src.string()), drawn.protocol.image_height_px, drawn.protocol.image_width_px));
            const auto degraded = reproduce_sample(sc, clean, bundle, 1);

            const std::string stem = sample_stem(i);
            const fs::path out(cfg.out_dir);
            auto& e = entries[i];
            e.index = i;
            e.clean = stem + ".clean.raw";
            e.degraded = stem + ".degraded.raw";
            e.sidecar = stem + ".sidecar.txt";
            e.source = sc.source;
            e.label = sc.label.level;
            e.d_over_r0 = sc.label.d_over_r0;
            e.table_row = sc.table_row;
            e.field_seed = sc.field_seed.seed;
            e.noise_seed = sc.noise_seed;
            write_raw((out / e.clean).string(), clean);
            write_raw((out / e.degraded).string(), degraded);
            save_sidecar((out / e.sidecar).string(), sc);
            if (cfg.write_png) {
                write_png((out / (stem + ".clean.png")).string(), clean);
                write_png((out / (stem + ".degraded.png")).string(), degraded);
            }
        });
    }
    std::string manifest;
    for (const auto& e : entries) manifest += to_json(e).dump() + "\n";
    write_file_bytes((fs::path(cfg.out_dir) / "manifest.jsonl").string(), manifest);
    spdlog::info("dataset: {} samples in {} (basis {}, generator {})", cfg.n_samples, cfg.out_dir, bundle.hash,
                 kGeneratorId);
    return entries;
}

}  // namespace turbsim
