#include <aerosynth/eval_map.hpp>
#include <aerosynth/meta_align.hpp>
#include <aerosynth/pipeline.hpp>
#include <aerosynth/protocol_fixtures.hpp>
#include <aerosynth/server.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <csignal>
#include <iostream>

namespace {

using namespace aerosynth;

aerosynth::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->shutdown();
}

struct ServeArgs {
    std::uint16_t port = kDefaultPort;
    std::uint64_t seed = 0;
    std::string bind = "127.0.0.1";
    std::string biome = "urban";
    int width = 3840, height = 2160, supersample = 2;
};

int run_serve(const ServeArgs& a) {
    ServerOptions opt;
    opt.port = a.port;
    opt.seed = a.seed;
    opt.bind_address = a.bind;
    opt.defaults.biome = parse_biome(a.biome);
    opt.defaults.render.out_width = a.width;
    opt.defaults.render.out_height = a.height;
    opt.defaults.render.supersample = a.supersample;
    opt.defaults.render.validate();
    Server server(opt);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    fmt::print("listening on {}:{} (seed {})\n", a.bind, server.port(), a.seed);
    std::fflush(stdout);
    server.serve();
    g_server = nullptr;
    return 0;
}

struct GenerateArgs {
    std::string scenario, out;
    std::optional<std::size_t> frames;
    bool dump_debug = false;
    std::optional<int> width, height;
};

int run_generate(const GenerateArgs& a) {
    ScenarioConfig config = load_config(a.scenario);
    if (a.width) config.render.out_width = *a.width;
    if (a.height) config.render.out_height = *a.height;
    GenerateOptions opt;
    opt.frames = a.frames;
    opt.dump_debug_buffers = a.dump_debug;
    const std::size_t total = a.frames.value_or(config.frame_count);
    const auto t0 = std::chrono::steady_clock::now();
    opt.on_frame = [&](const RenderedFrame& f) {
        if ((f.meta.frame_id + 1) % 50 == 0 || f.meta.frame_id + 1 == total)
            fmt::print(stderr, "frame {}/{}\n", f.meta.frame_id + 1, total);
    };
    const DatasetManifest m = generate_dataset(config, a.out, opt);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto counts = m.split_counts();
    fmt::print("wrote {} frames to {} (train {}, val {}) in {:.1f} s\n", m.frames.size(), a.out, counts["train"],
               counts["val"], s);
    return 0;
}

struct AlignArgs {
    std::string source, target, key = "time", mode = "bootstrap", out;
    std::size_t n = 0;
    double threshold = 20.0;
    std::uint64_t seed = 0;
    std::optional<double> target_pitch;
    bool rotation = false;
};

int run_align(const AlignArgs& a) {
    const MetaTable source = read_meta_table(a.source);
    const MetaKey key = parse_meta_key(a.key);
    nlohmann::json out{{"source", a.source}, {"key", std::string(to_string(key))}, {"mode", a.mode}};
    std::vector<std::uint64_t> ids;
    std::optional<MetaTable> target;
    if (!a.target.empty()) target = read_meta_table(a.target);

    if (a.mode == "bootstrap") {
        if (!target) throw ConfigError("bootstrap mode needs --target");
        const std::size_t n = a.n ? a.n : source.rows.size();
        const AlignmentResult r = bootstrap_align(source, *target, key, n, a.seed);
        ids = r.frame_ids;
        for (const auto& w : r.warnings) fmt::print(stderr, "warning: {}\n", w);
        out["n"] = n;
        out["seed"] = a.seed;
        out["warnings"] = r.warnings;
        out["uncovered_mass"] = r.uncovered_mass;
        const double before = ks_statistic(column(source, key), column(*target, key));
        const double after = ks_statistic(column(select_rows(source, ids), key), column(*target, key));
        out["ks_before"] = before;
        out["ks_after"] = after;
        fmt::print("bootstrap: {} frames, KS vs target {:.4f} -> {:.4f}\n", ids.size(), before, after);
    } else if (a.mode == "filter") {
        out["threshold"] = a.threshold;
        if (a.rotation) {
            if (!target) throw ConfigError("--rotation needs --target (first target row gives the orientation)");
            const MetaRow& t = target->rows.at(0);
            ids = rotation_filter(source, t.yaw, t.pitch, t.roll, a.threshold);
        } else if (a.target_pitch) {
            if (key != MetaKey::pitch) throw ConfigError("--target-pitch applies to --key pitch");
            ids = angle_filter(source, *a.target_pitch, a.threshold);
            out["target_pitch"] = *a.target_pitch;
        } else {
            if (!target || target->rows.empty()) throw ConfigError("filter mode needs --target or --target-pitch");
            const auto v = column(*target, key);
            const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
            ids = range_filter(source, key, *lo, *hi, a.threshold);
            out["target_range"] = {*lo, *hi};
        }
        fmt::print("filter: kept {} of {} frames ({:.2f}%)\n", ids.size(), source.rows.size(),
                   source.rows.empty() ? 0.0 : 100.0 * ids.size() / source.rows.size());
    } else {
        throw ConfigError("unknown --mode '" + a.mode + "' (bootstrap|filter)");
    }
    out["frame_ids"] = ids;
    write_text(a.out, out.dump(2) + "\n");

    // Derived manifest next to the index list when the source is a dataset.
    const fs::path dataset = fs::path(a.source).parent_path();
    if (fs::exists(dataset / "manifest.json")) {
        const DatasetManifest derived = derive_manifest(load_manifest(dataset), ids, "_" + a.mode);
        fs::path mpath = a.out;
        mpath.replace_extension(".manifest.json");
        write_text(mpath, nlohmann::json(derived).dump(2) + "\n");
    }
    return 0;
}

struct EvalArgs {
    std::string gt, pred, split;
    double iou = 0.5;
};

int run_eval(const EvalArgs& a) {
    const GroundTruthSet gt = load_ground_truth(a.gt, a.split);
    const auto dets = load_detections(a.pred);
    const MapResult r = evaluate_dataset(gt, dets, a.iou);
    fmt::print("{}", format_map_table(r));
    return 0;
}

int run_fixtures(const std::string& dir) {
    fs::create_directories(dir);
    const auto fixtures = protocol_fixtures();
    for (const auto& f : fixtures) write_file(fs::path(dir) / (f.name + ".bin"), f.bytes);
    fmt::print("wrote {} fixtures to {}\n", fixtures.size(), dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aerosynth: synthetic aerial detection data generator"};
    app.require_subcommand(1);

    ServeArgs serve;
    auto* s = app.add_subcommand("serve", "run the TCP command server");
    s->add_option("--port", serve.port, "TCP port")->capture_default_str();
    s->add_option("--seed", serve.seed, "session seed")->capture_default_str();
    s->add_option("--bind", serve.bind, "bind address")->capture_default_str();
    s->add_option("--biome", serve.biome, "session terrain: urban|water|pasture")->capture_default_str();
    s->add_option("--width", serve.width, "output width")->capture_default_str();
    s->add_option("--height", serve.height, "output height")->capture_default_str();
    s->add_option("--supersample", serve.supersample, "supersampling factor")->capture_default_str();

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "run a scenario and write a dataset");
    g->add_option("--scenario", gen.scenario, "scenario config JSON")->required()->check(CLI::ExistingFile);
    g->add_option("--out", gen.out, "output directory")->required();
    g->add_option("--frames", gen.frames, "frame count (overrides the config)");
    g->add_flag("--dump-debug-buffers", gen.dump_debug, "also write instance and depth buffers");
    g->add_option("--width", gen.width, "override output width");
    g->add_option("--height", gen.height, "override output height");

    AlignArgs al;
    auto* a = app.add_subcommand("align", "align a dataset's metadata distribution to a target");
    a->add_option("--source", al.source, "source meta.csv")->required()->check(CLI::ExistingFile);
    a->add_option("--target", al.target, "target meta.csv")->check(CLI::ExistingFile);
    a->add_option("--key", al.key, "time|pitch|altitude")->capture_default_str();
    a->add_option("--mode", al.mode, "bootstrap|filter")->capture_default_str();
    a->add_option("--n", al.n, "bootstrap sample count (default: source size)");
    a->add_option("--threshold", al.threshold, "filter tolerance")->capture_default_str();
    a->add_option("--seed", al.seed, "bootstrap seed")->capture_default_str();
    a->add_option("--target-pitch", al.target_pitch, "filter around this pitch instead of the target's range");
    a->add_flag("--rotation", al.rotation, "filter on the full camera rotation");
    a->add_option("--out", al.out, "output indices.json")->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "mAP@0.5 of predictions against a dataset");
    e->add_option("--gt", ev.gt, "dataset directory")->required()->check(CLI::ExistingDirectory);
    e->add_option("--pred", ev.pred, "predictions JSON")->required()->check(CLI::ExistingFile);
    e->add_option("--iou", ev.iou, "IoU threshold")->capture_default_str();
    e->add_option("--split", ev.split, "only frames of this split");

    std::string fixtures_dir = "docs/fixtures";
    auto* f = app.add_subcommand("protocol-fixtures", "write golden protocol messages");
    f->add_option("--out", fixtures_dir, "output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (s->parsed()) return run_serve(serve);
        if (g->parsed()) return run_generate(gen);
        if (a->parsed()) return run_align(al);
        if (e->parsed()) return run_eval(ev);
        if (f->parsed()) return run_fixtures(fixtures_dir);
    } catch (const aerosynth::Error& err) {
        fmt::print(stderr, "error: {}\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        fmt::print(stderr, "error: {}\n", err.what());
        return 3;
    }
    return 1;
}
