#pragma once

// Aligning synthetic metadata distributions to a reference set: bootstrap
// resampling over binned keys, angle subset filters and a two-sample KS
// diagnostic.

#include <aerosynth/camera.hpp>
#include <aerosynth/dataset_io.hpp>
#include <aerosynth/errors.hpp>
#include <aerosynth/meta.hpp>
#include <aerosynth/rng.hpp>

#include <Eigen/Geometry>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace aerosynth {

struct MetaRow {
    std::uint64_t frame_id = 0;
    double altitude = 0, pitch = 0, yaw = 0, roll = 0, clock = 0;
};

struct MetaTable {
    std::vector<MetaRow> rows;
    std::string source_path;

    static MetaTable from_records(std::span<const MetaRecord> records, std::string path = {}) {
        MetaTable t;
        t.source_path = std::move(path);
        t.rows.reserve(records.size());
        for (const auto& r : records) t.rows.push_back({r.frame_id, r.altitude, r.pitch, r.yaw, r.roll, r.clock});
        return t;
    }
};

inline MetaTable read_meta_table(const fs::path& path) {
    const auto records = read_meta_csv(path);
    return MetaTable::from_records(records, path.string());
}

enum class MetaKey : std::uint8_t { time, altitude, pitch };

inline MetaKey parse_meta_key(std::string_view s) {
    if (s == "time" || s == "clock") return MetaKey::time;
    if (s == "altitude") return MetaKey::altitude;
    if (s == "pitch") return MetaKey::pitch;
    throw ConfigError("unknown meta key '" + std::string(s) + "' (time|altitude|pitch)");
}

inline std::string_view to_string(MetaKey k) {
    switch (k) {
        case MetaKey::time: return "time";
        case MetaKey::altitude: return "altitude";
        case MetaKey::pitch: return "pitch";
    }
    return "?";
}

inline double key_value(const MetaRow& r, MetaKey k) {
    switch (k) {
        case MetaKey::time: return r.clock;
        case MetaKey::altitude: return r.altitude;
        case MetaKey::pitch: return r.pitch;
    }
    return 0;
}

inline std::vector<double> column(const MetaTable& t, MetaKey k) {
    std::vector<double> v;
    v.reserve(t.rows.size());
    for (const auto& r : t.rows) v.push_back(key_value(r, k));
    return v;
}

/// Default bin widths: 1 h for time, 10 m for altitude, 10 deg for pitch.
inline double default_bin_width(MetaKey k) {
    switch (k) {
        case MetaKey::time: return 3600.0;
        case MetaKey::altitude: return 10.0;
        case MetaKey::pitch: return 10.0;
    }
    return 1.0;
}

inline std::int64_t bin_index(double value, double width) { return static_cast<std::int64_t>(std::floor(value / width)); }

struct AlignmentResult {
    std::vector<std::uint64_t> frame_ids;  // with repetition, length n
    std::vector<std::string> warnings;
    double uncovered_mass = 0.0;            // target mass in bins the source lacks
    std::map<std::int64_t, double> target_mass;
    std::map<std::int64_t, double> sampling_mass;  // after redistribution
};

/// Samples n source frames so that the binned key follows the target's
/// empirical distribution. Target mass in bins the source does not cover
/// is spread proportionally over the covered bins.
inline AlignmentResult bootstrap_align(const MetaTable& source, const MetaTable& target, MetaKey key, std::size_t n,
                                       std::uint64_t seed, double bin_width = 0.0) {
    if (n < 1) throw InputError("bootstrap needs n >= 1");
    if (source.rows.empty()) throw InputError("bootstrap source table is empty");
    if (target.rows.empty()) throw InputError("bootstrap target table is empty");
    if (bin_width <= 0) bin_width = default_bin_width(key);

    std::map<std::int64_t, std::vector<std::uint64_t>> source_bins;
    for (const auto& r : source.rows) source_bins[bin_index(key_value(r, key), bin_width)].push_back(r.frame_id);

    AlignmentResult out;
    for (const auto& r : target.rows) out.target_mass[bin_index(key_value(r, key), bin_width)] += 1.0;
    for (auto& [b, m] : out.target_mass) m /= static_cast<double>(target.rows.size());

    double covered = 0.0;
    for (const auto& [b, m] : out.target_mass) {
        if (source_bins.contains(b)) {
            covered += m;
        } else {
            out.uncovered_mass += m;
            out.warnings.push_back(fmt::format("{} bin [{}, {}) holds {:.4f} of the target mass but no source frames; "
                                               "mass redistributed",
                                               to_string(key), b * bin_width, (b + 1) * bin_width, m));
        }
    }
    if (covered <= 0.0)
        throw AlignmentError(fmt::format("source covers none of the target's {} bins (uncovered mass {:.4f})",
                                         to_string(key), out.uncovered_mass),
                             out.uncovered_mass);

    std::vector<std::pair<std::int64_t, double>> cumulative;
    double acc = 0.0;
    for (const auto& [b, m] : out.target_mass) {
        if (!source_bins.contains(b)) continue;
        out.sampling_mass[b] = m / covered;
        acc += m / covered;
        cumulative.emplace_back(b, acc);
    }

    Rng rng(seed);
    out.frame_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform01() * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u,
                                   [](double v, const auto& e) { return v < e.second; });
        if (it == cumulative.end()) --it;
        const auto& frames = source_bins.at(it->first);
        out.frame_ids.push_back(frames[rng.below(frames.size())]);
    }
    return out;
}

inline AlignmentResult bootstrap_time_align(const MetaTable& source, const MetaTable& target, std::size_t n,
                                            std::uint64_t seed) {
    return bootstrap_align(source, target, MetaKey::time, n, seed);
}

/// Frames with |pitch - target_pitch| <= threshold, in source order.
inline std::vector<std::uint64_t> angle_filter(const MetaTable& source, double target_pitch, double threshold = 20.0) {
    if (!(threshold >= 0)) throw InputError("angle threshold must be >= 0");
    std::vector<std::uint64_t> out;
    for (const auto& r : source.rows)
        if (std::abs(r.pitch - target_pitch) <= threshold) out.push_back(r.frame_id);
    return out;
}

/// Frames whose key lies within threshold of [lo, hi].
inline std::vector<std::uint64_t> range_filter(const MetaTable& source, MetaKey key, double lo, double hi,
                                               double threshold) {
    if (!(threshold >= 0)) throw InputError("threshold must be >= 0");
    if (!(lo <= hi)) throw InputError("range filter needs lo <= hi");
    std::vector<std::uint64_t> out;
    for (const auto& r : source.rows) {
        const double v = key_value(r, key);
        if (v >= lo - threshold && v <= hi + threshold) out.push_back(r.frame_id);
    }
    return out;
}

/// Angle of the relative rotation between two camera orientations, degrees.
inline double rotation_distance_deg(double yaw_a, double pitch_a, double roll_a, double yaw_b, double pitch_b,
                                    double roll_b) {
    CameraPose a, b;
    a.yaw = yaw_a, a.pitch = pitch_a, a.roll = roll_a;
    b.yaw = yaw_b, b.pitch = pitch_b, b.roll = roll_b;
    const Eigen::Matrix3d rel = camera_rotation(a) * camera_rotation(b).transpose();
    const Eigen::Quaterniond q(rel);
    return rad2deg(2.0 * std::atan2(q.vec().norm(), std::abs(q.w())));
}

/// Combined-angle variant: keeps frames whose full camera rotation lies
/// within threshold of the target orientation.
inline std::vector<std::uint64_t> rotation_filter(const MetaTable& source, double target_yaw, double target_pitch,
                                                  double target_roll, double threshold = 20.0) {
    if (!(threshold >= 0)) throw InputError("angle threshold must be >= 0");
    std::vector<std::uint64_t> out;
    for (const auto& r : source.rows)
        if (rotation_distance_deg(r.yaw, r.pitch, r.roll, target_yaw, target_pitch, target_roll) <= threshold + 1e-9)
            out.push_back(r.frame_id);
    return out;
}

inline MetaTable select_rows(const MetaTable& t, std::span<const std::uint64_t> frame_ids) {
    std::map<std::uint64_t, const MetaRow*> by_id;
    for (const auto& r : t.rows) by_id.emplace(r.frame_id, &r);
    MetaTable out;
    out.source_path = t.source_path;
    for (auto id : frame_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw InputError(fmt::format("frame {} is not in the table", id));
        out.rows.push_back(*it->second);
    }
    return out;
}

/// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InputError("ks_statistic needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() || j < b.size()) {
        const double x = j == b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

/// Manifest restricted (with repetition) to the given frames, in order.
inline DatasetManifest derive_manifest(const DatasetManifest& m, std::span<const std::uint64_t> frame_ids,
                                       const std::string& suffix) {
    std::map<std::uint64_t, const FrameEntry*> by_id;
    for (const auto& f : m.frames) by_id.emplace(f.frame_id, &f);
    DatasetManifest out = m;
    out.name = m.name + suffix;
    out.frames.clear();
    for (auto id : frame_ids) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw IntegrityError(fmt::format("aligned frame {} is not in the manifest", id));
        out.frames.push_back(*it->second);
    }
    return out;
}

}  // namespace aerosynth
