#include <aerosynth/annotate.hpp>
#include <aerosynth/raycast.hpp>
#include <aerosynth/renderer.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <set>

using namespace aerosynth;

namespace {

struct Scene {
    WorldState world = WorldState::create(Biome::pasture, AreaRect{-1000, -1000, 1000, 1000}, 1);
    CameraPose pose;
    Intrinsics intr{128, 128, 60};
    RenderSettings settings{128, 128, 1, Quality::high};
};

ObjectId add_box(WorldState& w, Eigen::Vector3d pos, Extent3 e) {
    const ObjectId id = spawn_object(w, ClassId::car, pos, 0, 0);
    w.find(id)->box_shape = e;
    return id;
}

// Camera at altitude 10 looking horizontally along +Y.
Scene horizontal_scene() {
    Scene s;
    s.pose.position = {0, 0, 10};
    s.pose.yaw = 0;
    s.pose.pitch = 0;
    return s;
}

std::size_t four_connected_components(const FrameBuffers& fb, ObjectId id) {
    std::vector<char> seen(fb.instance.size(), 0);
    std::size_t comps = 0;
    for (int y = 0; y < fb.height; ++y)
        for (int x = 0; x < fb.width; ++x) {
            if (fb.instance[fb.index(x, y)] != id || seen[fb.index(x, y)]) continue;
            ++comps;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            seen[fb.index(x, y)] = 1;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    const int nx = cx + dx[k], ny = cy + dy[k];
                    if (nx < 0 || ny < 0 || nx >= fb.width || ny >= fb.height) continue;
                    const auto i = fb.index(nx, ny);
                    if (fb.instance[i] == id && !seen[i]) {
                        seen[i] = 1;
                        q.push({nx, ny});
                    }
                }
            }
        }
    return comps;
}

}  // namespace

TEST(Render, SingleCubeOnAxisIsOneConnectedRegion) {
    auto s = horizontal_scene();
    // Unit cube centered 3 m ahead on the optical axis.
    const ObjectId id = add_box(s.world, {0, 3, 9.5}, {1, 1, 1});
    const auto fb = render(s.world, s.pose, s.intr, s.settings);
    std::set<ObjectId> ids(fb.instance.begin(), fb.instance.end());
    ids.erase(kBackgroundId);
    ASSERT_EQ(ids, std::set<ObjectId>{id});
    EXPECT_EQ(four_connected_components(fb, id), 1u);
    EXPECT_EQ(fb.instance[fb.index(64, 64)], id);
    EXPECT_NEAR(fb.depth[fb.index(64, 64)], 2.5, 1e-4);
}

TEST(Render, NearCubeHidesCoaxialFarCube) {
    auto s = horizontal_scene();
    const ObjectId near_id = add_box(s.world, {0, 5, 9.0}, {2, 2, 2});
    const ObjectId far_id = add_box(s.world, {0, 12, 9.5}, {1, 1, 1});
    const auto fb = render(s.world, s.pose, s.intr, s.settings);
    EXPECT_NE(std::find(fb.instance.begin(), fb.instance.end(), near_id), fb.instance.end());
    EXPECT_EQ(std::find(fb.instance.begin(), fb.instance.end(), far_id), fb.instance.end());
}

TEST(Render, EmptyWorldIsTerrainAndSky) {
    auto s = horizontal_scene();
    s.pose.pitch = 20;
    const auto fb = render(s.world, s.pose, s.intr, s.settings);
    for (auto id : fb.instance) ASSERT_EQ(id, kBackgroundId);
    // Top rows see sky, bottom rows see ground at finite depth.
    EXPECT_TRUE(std::isinf(fb.depth[fb.index(64, 0)]));
    EXPECT_TRUE(std::isfinite(fb.depth[fb.index(64, 127)]));
}

TEST(Render, RejectsMismatchedIntrinsics) {
    auto s = horizontal_scene();
    s.intr.width = 64;
    EXPECT_THROW(render(s.world, s.pose, s.intr, s.settings), ConfigError);
}

TEST(Render, MidnightMuchDarkerThanNoon) {
    Scene s;
    s.pose.position = {0, 0, 40};
    s.pose.pitch = 45;
    for (int i = 0; i < 6; ++i) spawn_object(s.world, ClassId::cow, {i * 3.0 - 8, 40, 0}, i * 30.0, 0);
    for (auto q : {Quality::low, Quality::high}) {
        s.settings.quality = q;
        s.world.clock = 0;
        const double night = mean_luminance(render(s.world, s.pose, s.intr, s.settings).color);
        s.world.clock = 43200;
        const double noon = mean_luminance(render(s.world, s.pose, s.intr, s.settings).color);
        EXPECT_LT(night, 0.25 * noon) << to_string(q);
    }
}

TEST(Render, SunElevationSchedule) {
    EXPECT_DOUBLE_EQ(sun_elevation_deg(0), 0);
    EXPECT_NEAR(sun_elevation_deg(21600), 0, 1e-9);
    EXPECT_NEAR(sun_elevation_deg(43200), 90, 1e-9);
    EXPECT_NEAR(sun_elevation_deg(64800), 0, 1e-9);
    EXPECT_DOUBLE_EQ(sun_elevation_deg(75000), 0);
}

TEST(Render, QualityChangesColorOnly) {
    Scene s;
    s.pose.position = {0, 0, 30};
    s.pose.pitch = 60;
    s.world.biome = Biome::urban;
    for (int i = 0; i < 8; ++i) spawn_object(s.world, static_cast<ClassId>(i), {i * 4.0 - 14, 18, 0}, i * 40.0, 0);
    const auto low = render(s.world, s.pose, s.intr, set_quality(s.settings, Quality::low));
    const auto high = render(s.world, s.pose, s.intr, set_quality(s.settings, Quality::high));
    EXPECT_EQ(low.instance, high.instance);
    EXPECT_EQ(std::memcmp(low.depth.data(), high.depth.data(), low.depth.size() * sizeof(float)), 0);
    std::size_t differing_terrain = 0, terrain = 0;
    for (std::size_t i = 0; i < low.instance.size(); ++i) {
        if (low.instance[i] != kBackgroundId || !std::isfinite(low.depth[i])) continue;
        ++terrain;
        differing_terrain += low.color[3 * i] != high.color[3 * i] || low.color[3 * i + 1] != high.color[3 * i + 1];
    }
    EXPECT_GT(terrain, 0u);
    EXPECT_GT(differing_terrain, terrain / 2);
}

TEST(Render, Deterministic) {
    Scene s;
    s.pose.position = {0, 0, 30};
    s.pose.pitch = 50;
    s.world.biome = Biome::water;
    for (int i = 0; i < 5; ++i) spawn_object(s.world, ClassId::boat, {i * 8.0 - 16, 30, 0}, i * 70.0, 0);
    const auto a = render(s.world, s.pose, s.intr, s.settings, 42);
    const auto b = render(s.world, s.pose, s.intr, s.settings, 42);
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.instance, b.instance);
    const auto c = render(s.world, s.pose, s.intr, s.settings, 43);
    EXPECT_NE(a.color, c.color);  // grain is keyed per frame
}

TEST(Render, NearPlaneClipsCrossingTriangles) {
    auto s = horizontal_scene();
    // Box straddling the camera plane: only its front part may be drawn.
    const ObjectId id = add_box(s.world, {0, 0.5, 9.0}, {3, 3, 2});
    const auto fb = render(s.world, s.pose, s.intr, s.settings);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < fb.instance.size(); ++i)
        if (fb.instance[i] == id) {
            ++hits;
            ASSERT_GE(fb.depth[i], kNearPlane - 1e-6);
        }
    EXPECT_GT(hits, 0u);
}

// Depth correctness against the brute-force ray caster on random scenes.
TEST(Render, DepthAndIdsMatchRayCaster) {
    Rng rng(2718);
    for (int trial = 0; trial < 12; ++trial) {
        Scene s;
        s.world.biome = static_cast<Biome>(trial % 3);
        s.pose.position = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(15, 40)};
        s.pose.yaw = rng.uniform(0, 360);
        s.pose.pitch = rng.uniform(35, 90);
        s.pose.roll = rng.uniform(-10, 10);
        s.settings.supersample = 1 + trial % 2;
        s.intr = {96, 64, rng.uniform(40, 80)};
        s.settings.out_width = 96;
        s.settings.out_height = 64;
        const Eigen::Matrix3d r = camera_rotation(s.pose);
        const int n = 1 + static_cast<int>(rng.below(10));
        for (int k = 0; k < n; ++k) {
            const Eigen::Vector3d ahead = s.pose.position + r.row(2).transpose() * rng.uniform(10, 40);
            spawn_object(s.world, static_cast<ClassId>(rng.below(kClassCount)),
                         {ahead.x() + rng.uniform(-8, 8), ahead.y() + rng.uniform(-8, 8), 0}, rng.uniform(0, 360), 0);
        }
        const auto fb = render(s.world, s.pose, s.intr, s.settings);
        const auto oracle = raycast_frame(s.world, s.pose, s.intr, s.settings);
        std::size_t object_pixels = 0;
        for (std::size_t i = 0; i < fb.instance.size(); ++i) {
            ASSERT_EQ(fb.instance[i], oracle.instance[i]) << "trial " << trial << " pixel " << i;
            if (fb.instance[i] != kBackgroundId) {
                ++object_pixels;
                ASSERT_NEAR(fb.depth[i], oracle.depth[i], 1e-3);
            }
        }
        EXPECT_GT(object_pixels, 0u) << "trial " << trial;
    }
}

TEST(Downsample, AveragesBlocks) {
    FrameBuffers fb;
    fb.width = 4;
    fb.height = 2;
    fb.color.assign(4 * 2 * 3, 0);
    for (int i = 0; i < 4; ++i) fb.color[i * 3] = 100;  // top row red 100
    const Image img = downsample(fb, 2);
    ASSERT_EQ(img.width, 2);
    ASSERT_EQ(img.height, 1);
    EXPECT_EQ(img.rgb[0], 50);
    EXPECT_EQ(img.rgb[3], 50);
    EXPECT_THROW(downsample(fb, 3), ConfigError);
}
