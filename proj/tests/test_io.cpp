#include <gtest/gtest.h>

#include <fstream>
#include <string>

#include "cpo/io/ply.hpp"
#include "cpo/io/png.hpp"
#include "support.hpp"

using namespace cpo;
using cpo::test::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i)
    c.push_back(Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 3)),
                Color(rng.below(256) / 255.0, rng.below(256) / 255.0, rng.below(256) / 255.0));
  return c;
}

}  // namespace

TEST(Ply, AsciiFixture) {
  TempDir dir("ply");
  write_file(dir / "a.ply",
             "ply\nformat ascii 1.0\ncomment fixture\nelement vertex 3\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
             "0 0 0 255 0 0\n1.5 -2 0.25 0 255 0\n-1 2 3 0 0 255\n");
  const PointCloud c = io::load_pointcloud(dir / "a.ply");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c.positions[1], Vec3(1.5, -2, 0.25));
  EXPECT_EQ(c.positions[2], Vec3(-1, 2, 3));
  EXPECT_EQ(c.colors[0], Color(1, 0, 0));
  EXPECT_EQ(c.colors[2], Color(0, 0, 1));
}

TEST(Ply, ExtraPropertiesAndElementsAreSkipped) {
  TempDir dir("ply");
  write_file(dir / "a.ply",
             "ply\nformat ascii 1.0\nelement vertex 2\n"
             "property double x\nproperty double y\nproperty double z\nproperty float nx\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nproperty uchar alpha\n"
             "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
             "1 2 3 0.5 10 20 30 255\n4 5 6 0.5 40 50 60 255\n3 0 1 1\n");
  const PointCloud c = io::load_pointcloud(dir / "a.ply");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.positions[1], Vec3(4, 5, 6));
  EXPECT_DOUBLE_EQ(c.colors[1].y(), 50 / 255.0);
}

TEST(Ply, BinaryRoundTripIsBitIdentical) {
  TempDir dir("ply");
  const PointCloud c = random_cloud(1000, 1);
  io::save_pointcloud(c, dir / "b.ply");
  const PointCloud back = io::load_pointcloud(dir / "b.ply");
  EXPECT_EQ(back, c);
  io::save_pointcloud(back, dir / "c.ply");
  std::ifstream a(dir / "b.ply", std::ios::binary), b(dir / "c.ply", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Ply, AsciiRoundTrip) {
  TempDir dir("ply");
  const PointCloud c = random_cloud(200, 2);
  io::save_pointcloud(c, dir / "a.ply", io::PlyFormat::Ascii);
  EXPECT_EQ(io::load_pointcloud(dir / "a.ply"), c);
}

TEST(Ply, SinglePointRoundTrip) {
  TempDir dir("ply");
  PointCloud c;
  c.push_back(Vec3(0.1, 0.2, 0.3), Color(1, 0, 128 / 255.0));
  io::save_pointcloud(c, dir / "one.ply");
  EXPECT_EQ(io::load_pointcloud(dir / "one.ply"), c);
}

TEST(Ply, MissingColorIsMissingProperty) {
  TempDir dir("ply");
  write_file(dir / "a.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n");
  EXPECT_THROW(io::load_pointcloud(dir / "a.ply"), MissingProperty);
}

TEST(Ply, MalformedInputsAreParseErrors) {
  TempDir dir("ply");
  write_file(dir / "magic.ply", "plx\n");
  EXPECT_THROW(io::load_pointcloud(dir / "magic.ply"), ParseError);
  write_file(dir / "short.ply",
             "ply\nformat ascii 1.0\nelement vertex 3\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n1 2 3 0 0 0\n");
  EXPECT_THROW(io::load_pointcloud(dir / "short.ply"), ParseError);
  write_file(dir / "nan.ply",
             "ply\nformat ascii 1.0\nelement vertex 1\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\nnan 2 3 0 0 0\n");
  EXPECT_THROW(io::load_pointcloud(dir / "nan.ply"), ParseError);
  write_file(dir / "noheader.ply", "ply\nformat ascii 1.0\nelement vertex 1\n");
  EXPECT_THROW(io::load_pointcloud(dir / "noheader.ply"), ParseError);
}

TEST(Ply, IoErrors) {
  EXPECT_THROW(io::save_pointcloud(random_cloud(1, 3), ""), IoError);
  EXPECT_THROW(io::load_pointcloud("/nonexistent/cloud.ply"), IoError);
  EXPECT_THROW(io::save_pointcloud(random_cloud(1, 3), "/nonexistent/dir/cloud.ply"), IoError);
}

TEST(Png, RoundTripWithinQuantization) {
  TempDir dir("png");
  Panorama p(64, 128);
  Rng rng(4);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 128; ++c) p.set_color(r, c, Color(rng.uniform(), rng.uniform(), rng.uniform()));
  p.fill_valid(true);
  io::save_panorama(p, dir / "p.png");
  const Panorama back = io::load_panorama(dir / "p.png");
  ASSERT_EQ(back.height(), 64);
  ASSERT_EQ(back.width(), 128);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.pixels().size(); ++k)
    worst = std::max(worst, std::abs(static_cast<double>(p.pixels()[k]) - back.pixels()[k]));
  EXPECT_LE(worst, 1.0 / 255.0);
}

TEST(Png, FullSizePanoramaAndBlackPixelsStayValid) {
  TempDir dir("png");
  Panorama p(512, 1024);
  p.fill_valid(true);
  io::save_panorama(p, dir / "black.png");
  const Panorama back = io::load_panorama(dir / "black.png");
  EXPECT_EQ(back.width(), 2 * back.height());
  EXPECT_EQ(back.height(), 512);
  EXPECT_TRUE(std::all_of(back.valid_mask().begin(), back.valid_mask().end(), [](auto v) { return v == 1; }));
}

TEST(Png, WrongAspectIsRejected) {
  TempDir dir("png");
  // The writer takes any size; only the loader enforces W = 2H.
  Panorama p(100, 100);
  p.fill_valid(true);
  io::save_panorama(p, dir / "square.png");
  EXPECT_THROW(io::load_panorama(dir / "square.png"), AspectError);
}

TEST(Png, SixteenBitInput) {
  TempDir dir("png");
  const auto path = dir / "deep.png";
  std::FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, 64, 32, 16, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<unsigned char> row(64 * 3 * 2);
  for (int c = 0; c < 64 * 3; ++c) {
    // big-endian 16-bit sample: 0x8000 in every channel
    row[2 * c] = 0x80;
    row[2 * c + 1] = 0x00;
  }
  for (int r = 0; r < 32; ++r) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);

  const Panorama p = io::load_panorama(path);
  ASSERT_EQ(p.width(), 64);
  EXPECT_NEAR(p.channel(5, 7, 1), 32768.0 / 65535.0, 1e-6);
}

TEST(Png, ErrorsOnBadFiles) {
  TempDir dir("png");
  write_file(dir / "junk.png", "not a png at all");
  EXPECT_THROW(io::load_panorama(dir / "junk.png"), ParseError);
  EXPECT_THROW(io::load_panorama(dir / "missing.png"), IoError);
  EXPECT_THROW(io::save_panorama(Panorama(32, 64), ""), IoError);
}
