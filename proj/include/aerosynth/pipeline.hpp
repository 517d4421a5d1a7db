#pragma once

// Capture -> render -> annotate -> downsample, shared by the `generate`
// command and the protocol server.

#include <aerosynth/annotate.hpp>
#include <aerosynth/dataset_io.hpp>
#include <aerosynth/meta.hpp>
#include <aerosynth/renderer.hpp>
#include <aerosynth/scenario.hpp>

#include <fmt/format.h>

#include <functional>
#include <optional>
#include <vector>

namespace aerosynth {

struct RenderedFrame {
    MetaRecord meta;
    CameraPose pose;
    std::vector<Annotation> annotations;
    Image image;
    std::optional<FrameBuffers> buffers;  // supersampled buffers, only when requested
};

inline std::uint64_t grain_seed_for(std::uint64_t seed, std::uint64_t frame_id) { return hash_combine(seed, frame_id); }

inline RenderedFrame render_frame(const WorldState& world, const CameraPose& pose, const Intrinsics& intr,
                                  const RenderSettings& settings, std::uint64_t frame_id, std::uint64_t seed,
                                  bool keep_buffers = false) {
    pose.validate();
    RenderedFrame out;
    FrameBuffers fb = render(world, pose, intr, settings, grain_seed_for(seed, frame_id));
    out.annotations = extract_annotations(fb, world, pose, intr, settings);
    out.image = downsample(fb, settings.supersample);
    out.pose = pose;
    out.meta.frame_id = frame_id;
    out.meta.altitude = pose.altitude();
    out.meta.yaw = pose.yaw;
    out.meta.pitch = pose.pitch;
    out.meta.roll = pose.roll;
    out.meta.clock = world.clock;
    out.meta.weather = world.weather;
    out.meta.quality = settings.quality;
    out.meta.seed = seed;
    if (keep_buffers) out.buffers = std::move(fb);
    return out;
}

inline RenderedFrame render_capture(const ScenarioConfig& config, const WorldState& world, const Capture& capture,
                                    bool keep_buffers = false) {
    return render_frame(world, capture.pose, config.intrinsics(), config.render, capture.frame_id, config.seed,
                        keep_buffers);
}

inline std::string config_hash(const ScenarioConfig& config) {
    return fmt::format("{:016x}", fnv1a64(config_to_json(config).dump()));
}

inline std::vector<std::string> class_names(std::span<const ClassId> classes) {
    std::vector<std::string> names;
    for (ClassId c : classes) names.emplace_back(class_name(c));
    return names;
}

/// Collects frames into a dataset directory and finalizes meta.csv and the
/// manifest.
class DatasetWriter {
public:
    DatasetWriter(fs::path dir, std::string name, std::vector<ClassId> classes, int width, int height,
                  std::string config_hash, bool dump_debug = false)
        : dir_(std::move(dir)), classes_(std::move(classes)), dump_debug_(dump_debug) {
        manifest_.name = std::move(name);
        manifest_.classes = class_names(classes_);
        manifest_.image_width = width;
        manifest_.image_height = height;
        manifest_.config_hash = std::move(config_hash);
        ensure_layout(dir_);
    }

    FramePaths add(const RenderedFrame& frame) {
        const FramePaths paths =
            write_frame(dir_, frame.meta.frame_id, frame.image, frame.annotations, frame.meta, classes_);
        if (dump_debug_ && frame.buffers) dump_debug_buffers(dir_, frame.meta.frame_id, *frame.buffers);
        manifest_.frames.push_back({frame.meta.frame_id, paths, "train"});
        records_.push_back(frame.meta);
        return paths;
    }

    DatasetManifest finalize(std::span<const double> ratios, std::uint64_t split_seed) {
        manifest_ = split(std::move(manifest_), ratios, split_seed);
        write_meta_csv(dir_, records_);
        save_manifest(dir_, manifest_);
        return manifest_;
    }

    const std::vector<ClassId>& classes() const { return classes_; }

private:
    fs::path dir_;
    std::vector<ClassId> classes_;
    bool dump_debug_ = false;
    DatasetManifest manifest_;
    std::vector<MetaRecord> records_;
};

inline constexpr std::array<double, 2> kDefaultSplit = {0.8, 0.2};

struct GenerateOptions {
    std::optional<std::size_t> frames;  // overrides config.frame_count
    bool dump_debug_buffers = false;
    std::function<void(const RenderedFrame&)> on_frame;
};

inline DatasetManifest generate_dataset(ScenarioConfig config, const fs::path& out, const GenerateOptions& options = {}) {
    if (options.frames) config.frame_count = *options.frames;
    config.validate();
    DatasetWriter writer(out, config.name, config.classes(), config.render.out_width, config.render.out_height,
                         config_hash(config), options.dump_debug_buffers);
    ScenarioRunner runner(config);
    while (const auto capture = runner.next_capture()) {
        const RenderedFrame frame = render_capture(config, runner.world(), *capture, options.dump_debug_buffers);
        writer.add(frame);
        if (options.on_frame) options.on_frame(frame);
    }
    return writer.finalize(kDefaultSplit, config.seed);
}

}  // namespace aerosynth
