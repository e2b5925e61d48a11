#include <gtest/gtest.h>

#include <sstream>

#include "embalign/nrrd.hpp"
#include "test_support.hpp"

using namespace embalign;
using testing_support::TempDir;

namespace {

std::string header(const std::string& type, const std::string& sizes, const std::string& extra = "") {
    return "NRRD0004\ntype: " + type + "\ndimension: 3\nsizes: " + sizes +
           "\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n" + extra + "endian: little\nencoding: raw\n\n";
}

} // namespace

TEST(Nrrd, FloatRoundTripIsBitExact) {
    TempDir dir("nrrd");
    auto v = testing_support::random_volume({5, 4, 3}, {0.1, 1.0 / 3.0, 2.5e-7}, 11);
    v.data[0] = -0.0f;
    v.data[1] = std::numeric_limits<float>::denorm_min();
    write_volume(dir / "v.nrrd", v);
    const auto back = std::get<Volume3D>(read_volume(dir / "v.nrrd"));
    EXPECT_EQ(back.dims, v.dims);
    EXPECT_EQ(back.spacing, v.spacing);
    ASSERT_EQ(back.data.size(), v.data.size());
    EXPECT_EQ(std::memcmp(back.data.data(), v.data.data(), v.data.size() * sizeof(float)), 0);
}

TEST(Nrrd, MaskRoundTripAndRewriteBytesIdentical) {
    TempDir dir("nrrd");
    Mask3D m({6, 2, 3}, {0.5, 0.5, 0.7});
    for (std::size_t i = 0; i < m.data.size(); i += 3) m.data[i] = 1;
    write_volume(dir / "m.nrrd", m);
    const auto back = read_mask(dir / "m.nrrd");
    EXPECT_EQ(back.data, m.data);
    EXPECT_EQ(back.spacing, m.spacing);
    write_volume(dir / "m2.nrrd", back);
    EXPECT_EQ(testing_support::file_bytes(dir / "m.nrrd"), testing_support::file_bytes(dir / "m2.nrrd"));
}

TEST(Nrrd, HeaderLayout) {
    Mask3D m({2, 1, 1}, {0.5, 1, 2});
    std::ostringstream out;
    write_volume(out, m);
    const std::string s = out.str();
    EXPECT_EQ(s.substr(0, s.size() - 2),
              "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 2 1 1\nspace directions: (0.5,0,0) (0,1,0) (0,0,2)\n"
              "endian: little\nencoding: raw\n\n");
}

TEST(Nrrd, TruncatedPayload) {
    std::string bytes = header("uint8", "4 4 4") + std::string(63, '\1');
    std::istringstream in(bytes);
    EXPECT_THROW(read_volume(in), TruncationError);
}

TEST(Nrrd, TrailingBytesAreRejected) {
    std::string bytes = header("uint8", "1 1 2") + std::string(3, '\0');
    std::istringstream in(bytes);
    EXPECT_THROW(read_volume(in), TruncationError);
}

TEST(Nrrd, MaskValueTwo) {
    TempDir dir("nrrd");
    std::string payload(8, '\0');
    payload[5] = 2;
    testing_support::write_bytes(dir / "bad.nrrd", header("uint8", "2 2 2") + payload);
    EXPECT_THROW(read_mask(dir / "bad.nrrd"), MaskValueError);
}

TEST(Nrrd, UnknownFieldNamed) {
    std::istringstream in(header("uint8", "1 1 1", "kinds: domain domain domain\n") + std::string(1, '\0'));
    try {
        read_volume(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("kinds"), std::string::npos);
    }
}

TEST(Nrrd, RejectsUnsupportedVariants) {
    const std::vector<std::string> bad{
        "NRRD0005\n",
        header("double", "1 1 1"),
        header("uint8", "1 1"),
        header("uint8", "0 1 1"),
        "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\nspace directions: (1,0.5,0) (0,1,0) (0,0,1)\n"
        "endian: little\nencoding: raw\n\n",
        "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n"
        "endian: big\nencoding: raw\n\n",
        "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n"
        "endian: little\nencoding: gzip\n\n",
        "NRRD0004\ndimension: 3\ntype: uint8\nsizes: 1 1 1\nspace directions: (1,0,0) (0,1,0) (0,0,1)\n"
        "endian: little\nencoding: raw\n\n",
    };
    for (const auto& b : bad) {
        std::istringstream in(b + std::string(1, '\0'));
        EXPECT_THROW(read_volume(in), ParseError) << b;
    }
}

TEST(Nrrd, ImageReaderWidensMasks) {
    TempDir dir("nrrd");
    Mask3D m({2, 1, 1}, {1, 1, 1});
    m.data = {0, 1};
    write_volume(dir / "m.nrrd", m);
    EXPECT_EQ(read_image(dir / "m.nrrd").data, (std::vector<float>{0.0f, 1.0f}));
}

TEST(Nrrd, MissingFileIsIoError) {
    EXPECT_THROW(read_volume(std::filesystem::path("/nonexistent/x.nrrd")), IoError);
}
