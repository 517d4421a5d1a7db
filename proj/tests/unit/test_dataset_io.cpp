#include <aerosynth/dataset_io.hpp>
#include <aerosynth/pipeline.hpp>

#include <gtest/gtest.h>

#include <set>

using namespace aerosynth;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / fmt::format("aerosynth_{}_{}", tag, Rng(fnv1a64(tag) ^ std::random_device{}()).next());
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

Image gradient(int w, int h) {
    Image img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<std::uint8_t>((x * 7 + y * 3 + c * 50) & 0xff);
    return img;
}

MetaRecord sample_meta(std::uint64_t id) {
    MetaRecord m;
    m.frame_id = id;
    m.altitude = 42.5;
    m.yaw = 123.25;
    m.pitch = 60;
    m.clock = 50000.125;
    m.weather = Weather::rain;
    m.quality = Quality::low;
    m.seed = 99;
    return m;
}

DatasetManifest manifest_of(std::size_t n) {
    DatasetManifest m;
    m.name = "t";
    for (std::size_t i = 0; i < n; ++i) m.frames.push_back({i, frame_paths(i), "train"});
    return m;
}

}  // namespace

TEST(Labels, CenterFormat) {
    const LabelBox l = make_label(0, {25, 25, 75, 75}, 100, 100);
    EXPECT_EQ(format_label_line(l), "0 0.500000 0.500000 0.500000 0.500000");
    EXPECT_EQ(format_label_line(make_label(3, {0, 0, 100, 50}, 100, 100)), "3 0.500000 0.250000 1.000000 0.500000");
}

TEST(Labels, OutsideImageIsIntegrityError) {
    EXPECT_THROW(make_label(0, {-5, 10, 20, 20}, 100, 100), IntegrityError);
    EXPECT_THROW(make_label(0, {90, 10, 120, 20}, 100, 100), IntegrityError);
    EXPECT_THROW(make_label(0, {10, 10, 20, 101}, 100, 100), IntegrityError);
}

TEST(Labels, UnknownClassIsIntegrityError) {
    Annotation a;
    a.cls = ClassId::bus;
    a.bbox = {1, 1, 5, 5};
    const std::vector<ClassId> classes{ClassId::cow};
    EXPECT_THROW(format_labels(std::span(&a, 1), classes, 10, 10), IntegrityError);
}

TEST(Labels, RoundTripAt4K) {
    Rng rng(17);
    for (int i = 0; i < 2000; ++i) {
        const int x0 = static_cast<int>(rng.below(3800)), y0 = static_cast<int>(rng.below(2100));
        const PixelBox b{x0, y0, x0 + 1 + static_cast<int>(rng.below(3840 - x0)),
                         y0 + 1 + static_cast<int>(rng.below(2160 - y0))};
        const LabelBox l = make_label(2, b, 3840, 2160);
        const auto parsed = parse_labels(format_label_line(l) + "\n");
        ASSERT_EQ(parsed.size(), 1u);
        EXPECT_EQ(parsed[0].class_index, 2);
        EXPECT_NEAR(parsed[0].x_center, l.x_center, 1e-5);
        EXPECT_NEAR(parsed[0].width, l.width, 1e-5);
        const auto px = label_to_pixels(parsed[0], 3840, 2160);
        EXPECT_NEAR(px[0], b.x_min, 1.0);
        EXPECT_NEAR(px[1], b.y_min, 1.0);
        EXPECT_NEAR(px[2], b.x_max, 1.0);
        EXPECT_NEAR(px[3], b.y_max, 1.0);
    }
}

TEST(Labels, ParseRejectsMalformed) {
    EXPECT_THROW(parse_labels("0 0.5 0.5 0.5\n"), ParseError);
    EXPECT_THROW(parse_labels("0 0.5 0.5 0.5 0.5 7\n"), ParseError);
    EXPECT_TRUE(parse_labels("").empty());
}

TEST(Png, RoundTripLossless) {
    const Image img = gradient(37, 23);
    const auto bytes = encode_png(img);
    const Image back = decode_png(bytes);
    EXPECT_EQ(back.width, 37);
    EXPECT_EQ(back.height, 23);
    EXPECT_EQ(back.rgb, img.rgb);
    EXPECT_THROW(decode_png(std::vector<std::uint8_t>{1, 2, 3}), ParseError);
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
    EXPECT_THROW(decode_png(truncated), ParseError);
}

TEST(Meta, JsonAndCsvRoundTrip) {
    const MetaRecord m = sample_meta(12);
    EXPECT_EQ(nlohmann::json(m).get<MetaRecord>(), m);
    EXPECT_EQ(parse_meta_csv_row(meta_csv_row(m)), m);
    EXPECT_THROW(parse_meta_csv_row("1,2,3"), ParseError);
    EXPECT_THROW(parse_meta_csv_row("x,1,1,1,1,1,clear,high,1"), ParseError);
    MetaRecord bad = m;
    bad.clock = 86400;
    EXPECT_THROW(bad.validate(), IntegrityError);
    bad = m;
    bad.altitude = -1;
    EXPECT_THROW(bad.validate(), IntegrityError);
}

TEST(WriteFrame, LayoutAndRoundTrip) {
    TempDir tmp("write_frame");
    const Image img = gradient(100, 100);
    std::vector<Annotation> anns(2);
    anns[0].cls = ClassId::cow;
    anns[0].bbox = {25, 25, 75, 75};
    anns[1].cls = ClassId::car;
    anns[1].bbox = {0, 10, 3, 99};
    const std::vector<ClassId> classes{ClassId::car, ClassId::cow};
    const FramePaths p = write_frame(tmp.path, 7, img, anns, sample_meta(7), classes);
    EXPECT_EQ(p.image, "images/000007.png");
    EXPECT_EQ(p.label, "labels/000007.txt");
    EXPECT_EQ(p.meta, "meta/000007.json");
    EXPECT_EQ(read_text(tmp.path / p.label),
              "1 0.500000 0.500000 0.500000 0.500000\n0 0.015000 0.545000 0.030000 0.890000\n");
    EXPECT_EQ(decode_png(read_file(tmp.path / p.image)).rgb, img.rgb);
    EXPECT_EQ(nlohmann::json::parse(read_text(tmp.path / p.meta)).get<MetaRecord>(), sample_meta(7));

    const FramePaths e = write_frame(tmp.path, 8, img, {}, sample_meta(8), classes);
    EXPECT_TRUE(fs::exists(tmp.path / e.label));
    EXPECT_EQ(fs::file_size(tmp.path / e.label), 0u);
}

TEST(WriteFrame, UnwritableDirectoryIsIoError) {
    TempDir tmp("unwritable");
    write_text(tmp.path / "blocker", "x");
    EXPECT_THROW(write_frame(tmp.path / "blocker", 0, gradient(4, 4), {}, sample_meta(0), {}), IoError);
}

TEST(Split, FiftyThousandFramesAndDeterminism) {
    const std::array<double, 2> ratios{0.8, 0.2};
    const DatasetManifest a = split(manifest_of(50000), ratios, 3);
    auto counts = a.split_counts();
    EXPECT_EQ(counts["train"], 40000u);
    EXPECT_EQ(counts["val"], 10000u);
    const DatasetManifest b = split(manifest_of(50000), ratios, 3);
    for (std::size_t i = 0; i < a.frames.size(); ++i) ASSERT_EQ(a.frames[i].split, b.frames[i].split);
    const DatasetManifest c = split(manifest_of(50000), ratios, 4);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.frames.size(); ++i) differ += a.frames[i].split != c.frames[i].split;
    EXPECT_GT(differ, 1000u);
}

TEST(Split, EdgeRatios) {
    const std::array<double, 2> all_train{1.0, 0.0};
    EXPECT_EQ(split(manifest_of(17), all_train, 1).split_counts()["train"], 17u);
    const std::array<double, 3> three{0.5, 0.25, 0.25};
    auto counts = split(manifest_of(10), three, 1).split_counts();
    EXPECT_EQ(counts["train"] + counts["val"] + counts["test"], 10u);
    EXPECT_EQ(counts["train"], 5u);
    const std::array<double, 2> bad{0.5, 0.4};
    EXPECT_THROW(split(manifest_of(3), bad, 1), InputError);
    EXPECT_EQ(split(manifest_of(0), all_train, 1).frames.size(), 0u);
}

TEST(Manifest, IntegrityDetectsDeletedAndRenamed) {
    TempDir tmp("manifest");
    DatasetManifest m = manifest_of(3);
    for (std::uint64_t i = 0; i < 3; ++i) write_frame(tmp.path, i, gradient(8, 8), {}, sample_meta(i), {});
    save_manifest(tmp.path, m);
    const DatasetManifest loaded = load_manifest(tmp.path);
    EXPECT_EQ(loaded.frames.size(), 3u);
    EXPECT_NO_THROW(verify_integrity(tmp.path, loaded));
    fs::remove(tmp.path / "labels/000001.txt");
    EXPECT_THROW(verify_integrity(tmp.path, loaded), IntegrityError);
    write_text(tmp.path / "labels/000001.txt", "");
    fs::rename(tmp.path / "meta/000002.json", tmp.path / "meta/000002.bak");
    const auto missing = missing_files(tmp.path, loaded);
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_EQ(missing[0], "meta/000002.json");
}

TEST(Generate, SmallRunIsCompleteAndDeterministic) {
    ScenarioConfig c = load_config(fs::path(AEROSYNTH_SOURCE_DIR) / "presets" / "cattle.json");
    c.render.out_width = 160;
    c.render.out_height = 90;
    TempDir a("gen_a"), b("gen_b");
    GenerateOptions opt;
    opt.frames = 6;
    opt.dump_debug_buffers = true;
    const DatasetManifest ma = generate_dataset(c, a.path, opt);
    opt.dump_debug_buffers = false;
    const DatasetManifest mb = generate_dataset(c, b.path, opt);
    ASSERT_EQ(ma.frames.size(), 6u);
    EXPECT_NO_THROW(verify_integrity(a.path, ma));
    EXPECT_EQ(ma.classes, std::vector<std::string>{"cow"});
    EXPECT_EQ(nlohmann::json(ma), nlohmann::json(mb));
    for (const auto& f : ma.frames) {
        EXPECT_EQ(read_text(a.path / f.paths.label), read_text(b.path / f.paths.label));
        EXPECT_EQ(read_file(a.path / f.paths.image), read_file(b.path / f.paths.image));
    }
    EXPECT_TRUE(fs::exists(a.path / "debug/000000_instance.png"));
    EXPECT_TRUE(fs::exists(a.path / "debug/000000_depth.pfm"));
    EXPECT_FALSE(fs::exists(b.path / "debug"));
    const auto records = read_meta_csv(a.path / "meta.csv");
    ASSERT_EQ(records.size(), 6u);
    for (const auto& r : records) {
        EXPECT_GE(r.altitude, 10);
        EXPECT_LE(r.altitude, 80);
        EXPECT_EQ(nlohmann::json::parse(read_text(a.path / frame_paths(r.frame_id).meta)).get<MetaRecord>().pitch,
                  r.pitch);
    }
}
