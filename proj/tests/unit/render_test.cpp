#include <gtest/gtest.h>

#include "embalign/phantom.hpp"
#include "embalign/render.hpp"
#include "test_support.hpp"

using namespace embalign;
using testing_support::TempDir;

namespace {

Volume3D ramp_volume() {
    Volume3D v({3, 4, 2}, {1, 1, 1});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) v(i, j, 1) = static_cast<float>(4 * i + j);
    return v;
}

std::vector<char> pgm(const std::string& header, std::initializer_list<int> pixels) {
    std::vector<char> out(header.begin(), header.end());
    for (int p : pixels) out.push_back(static_cast<char>(static_cast<unsigned char>(p)));
    return out;
}

} // namespace

TEST(Render, GoldenSagittal) {
    TempDir dir("pgm");
    write_pgm(dir / "s.pgm", mid_sagittal_plane(ramp_volume()));
    EXPECT_EQ(testing_support::file_bytes(dir / "s.pgm"),
              pgm("P5\n4 3\n255\n", {0, 23, 46, 70, 93, 116, 139, 162, 185, 209, 232, 255}));
}

TEST(Render, GoldenCoronal) {
    TempDir dir("pgm");
    write_pgm(dir / "c.pgm", mid_coronal_plane(ramp_volume()));
    EXPECT_EQ(testing_support::file_bytes(dir / "c.pgm"), pgm("P5\n2 3\n255\n", {0, 51, 0, 153, 0, 255}));
}

TEST(Render, ZeroVolumeGivesZeroPlanes) {
    Volume3D v({5, 6, 7}, {1, 1, 1});
    for (const auto& p : {mid_sagittal_plane(v), mid_coronal_plane(v)}) {
        for (auto x : p.pixels) EXPECT_EQ(x, 0);
    }
}

TEST(Render, CubeGivesSquarePlanes) {
    TempDir dir("pgm");
    const auto v = testing_support::random_volume({192, 192, 192}, {1, 1, 1}, 6);
    const auto s = mid_sagittal_plane(v), c = mid_coronal_plane(v);
    EXPECT_EQ(s.width, 192u);
    EXPECT_EQ(s.height, 192u);
    EXPECT_EQ(c.width, 192u);
    EXPECT_EQ(c.height, 192u);
    write_pgm(dir / "s.pgm", s);
    EXPECT_EQ(testing_support::file_bytes(dir / "s.pgm").size(), std::string("P5\n192 192\n255\n").size() + 192u * 192u);
}

TEST(Render, CanonicalHeadIsUp) {
    const auto sample = generate_phantom(PhantomSpec::for_week(10, 2), {.identity_pose = true});
    const auto set = generate_candidates(sample.image, sample.mask);
    const auto plane = mid_sagittal_plane(set.volumes[closest_to_identity(set)]);
    // the head is the thickest part of the body, so the widest row lies above the middle
    std::size_t widest_row = 0, widest = 0;
    for (std::size_t r = 0; r < plane.height; ++r) {
        std::size_t w = 0;
        for (std::size_t c = 0; c < plane.width; ++c) w += plane.pixels[r * plane.width + c] > 0;
        if (w > widest) {
            widest = w;
            widest_row = r;
        }
    }
    EXPECT_GT(widest, 0u);
    EXPECT_LT(widest_row, plane.height / 2);
}

TEST(Render, ScalingIsMinMax) {
    const auto px = scale_to_u8({-2.0f, 0.0f, 2.0f});
    EXPECT_EQ(px, (std::vector<std::uint8_t>{0, 128, 255}));
    EXPECT_EQ(scale_to_u8({3.0f, 3.0f}), (std::vector<std::uint8_t>{0, 0}));
}
