#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "cmfd/convolution.hpp"
#include "cmfd/io.hpp"
#include "cmfd/morphology.hpp"
#include "cmfd/resample.hpp"
#include "support.hpp"

using namespace cmfd;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cmfd_imaging_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(GrayImage, RejectsOutOfRangeAndEmpty) {
  EXPECT_THROW(GrayImage(Field(2, 2, 1.5)), ArgumentError);
  EXPECT_THROW(GrayImage(Field(0, 3)), ArgumentError);
  Field f(2, 1);
  f(0, 0) = std::nan("");
  EXPECT_THROW(GrayImage{f}, ArgumentError);
  EXPECT_NO_THROW(GrayImage(3, 2, 0.5));
}

TEST(LoadImage, EightBitScaling) {
  cv::Mat m(1, 2, CV_8UC1);
  m.at<unsigned char>(0, 0) = 255;
  m.at<unsigned char>(0, 1) = 0;
  const auto path = temp_path("gray.png");
  cv::imwrite(path.string(), m);
  const GrayImage img = load_image(path);
  EXPECT_DOUBLE_EQ(img(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(img(1, 0), 0.0);
}

TEST(LoadImage, LumaWeights) {
  cv::Mat m(1, 1, CV_8UC3, cv::Scalar(0, 0, 255));  // BGR: pure red
  const auto path = temp_path("red.png");
  cv::imwrite(path.string(), m);
  EXPECT_NEAR(load_image(path)(0, 0), 0.299, 1e-12);
}

TEST(LoadImage, Errors) {
  EXPECT_THROW(load_image(temp_path("missing.png")), IoError);
  const auto junk = temp_path("junk.png");
  std::ofstream(junk) << "not an image";
  EXPECT_THROW(load_image(junk), FormatError);
}

TEST(MaskIo, RoundTrip) {
  BinaryMask m(5, 4);
  m(1, 2) = 1;
  m(4, 0) = 1;
  const auto path = temp_path("mask.png");
  save_mask(m, path);
  EXPECT_EQ(load_mask(path), m);
  const cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  EXPECT_EQ(raw.at<unsigned char>(2, 1), 255);
}

TEST(ResizeBicubic, Dimensions) {
  const GrayImage img(100, 100, 0.3);
  const auto out = resize_bicubic(img, 2.0);
  EXPECT_EQ(out.width(), 200);
  EXPECT_EQ(out.height(), 200);
  EXPECT_EQ(resize_bicubic(GrayImage(7, 3, 0.1), 1.5).width(), 11);  // round(10.5)
  EXPECT_THROW(resize_bicubic(img, 0.0), ArgumentError);
  EXPECT_THROW(resize_bicubic(img, -1.0), ArgumentError);
  EXPECT_THROW(resize_bicubic(img, 0.001), ArgumentError);
}

TEST(ResizeBicubic, IdentityFactor) {
  Rng rng(3);
  const GrayImage img(test::random_field(13, 9, rng));
  EXPECT_EQ(resize_bicubic(img, 1.0), img);
}

TEST(ResizeBicubic, ConstantFieldStaysConstant) {
  for (double f : {2.0, 0.5, 1.37, 3.0}) {
    const auto out = resize_bicubic(GrayImage(31, 17, 0.5), f);
    for (double v : out.values()) ASSERT_NEAR(v, 0.5, 1e-9) << "factor " << f;
  }
}

TEST(ResizeBicubic, CubicKernelValues) {
  // Keys kernel with a = -0.5 at the standard tap offsets.
  EXPECT_DOUBLE_EQ(cubic_weight(0.0), 1.0);
  EXPECT_DOUBLE_EQ(cubic_weight(1.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_weight(2.0), 0.0);
  EXPECT_DOUBLE_EQ(cubic_weight(0.5), 0.5625);
  EXPECT_DOUBLE_EQ(cubic_weight(1.5), -0.0625);
}

TEST(ConvolveFft, IdentityKernel) {
  Rng rng(1);
  const Field img = test::random_field(20, 15, rng);
  EXPECT_LE(test::max_abs_diff(convolve_fft(img, Field(1, 1, 1.0)), img), 1e-10);
}

TEST(ConvolveFft, ImpulseReproducesKernel) {
  Rng rng(2);
  const Field k = test::random_field(5, 5, rng);
  Field img(21, 21);
  img(10, 10) = 1.0;
  const Field out = convolve_fft(img, k);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 5; ++u) EXPECT_NEAR(out(8 + u, 8 + v), k(u, v), 1e-12);
  EXPECT_NEAR(out(0, 0), 0.0, 1e-12);
}

TEST(ConvolveFft, MatchesDirectConvolution) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Field img = test::random_field(32, 32, rng);
    const Field k = test::random_field(5, 5, rng, -1.0, 1.0);
    ASSERT_LE(test::max_abs_diff(convolve_fft(img, k), test::direct_convolution(img, k)), 1e-8) << seed;
  }
}

TEST(ConvolveFft, EvenAndOblongKernels) {
  Rng rng(7);
  const Field img = test::random_field(17, 11, rng);
  for (auto [kw, kh] : {std::pair{4, 4}, std::pair{1, 7}, std::pair{6, 3}}) {
    const Field k = test::random_field(kw, kh, rng);
    EXPECT_LE(test::max_abs_diff(convolve_fft(img, k), test::direct_convolution(img, k)), 1e-10);
  }
  EXPECT_THROW(convolve_fft(img, Field()), ArgumentError);
}

TEST(GaussianBlur, PreservesConstantAndMass) {
  const Field flat(30, 20, 0.25);
  const Field blurred = gaussian_blur(flat, 2.0);
  for (double v : blurred.values()) EXPECT_NEAR(v, 0.25, 1e-12);
  Field impulse(61, 61);
  impulse(30, 30) = 1.0;
  const Field b = gaussian_blur(impulse, 3.0, Border::Zero);
  double mass = 0.0;
  for (double v : b.values()) mass += v;
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Dilate, SinglePixelDisk) {
  BinaryMask m(21, 21);
  m(10, 10) = 1;
  const BinaryMask d = dilate(m, 2.0);
  std::size_t expected = 0;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx)
      if (dx * dx + dy * dy <= 4) {
        ++expected;
        EXPECT_EQ(d(10 + dx, 10 + dy), 1);
      }
  EXPECT_EQ(expected, 13u);
  EXPECT_EQ(count_nonzero(d), expected);
}

TEST(Dilate, TrivialCases) {
  const BinaryMask empty(9, 9);
  EXPECT_EQ(dilate(empty, 3.0), empty);
  Rng rng(4);
  BinaryMask m(12, 8);
  for (auto& v : m.values()) v = rng.uniform() < 0.2;
  EXPECT_EQ(dilate(m, 0.0), m);
  EXPECT_THROW(dilate(m, -1.0), ArgumentError);
}

TEST(Dilate, MatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    BinaryMask m(25, 19);
    for (auto& v : m.values()) v = rng.uniform() < 0.03;
    const double r = rng.uniform(0.5, 4.5);
    const BinaryMask d = dilate(m, r);
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        bool hit = false;
        for (int v = 0; v < m.height() && !hit; ++v)
          for (int u = 0; u < m.width() && !hit; ++u)
            hit = m(u, v) && (u - x) * (u - x) + (v - y) * (v - y) <= r * r;
        ASSERT_EQ(d(x, y), hit ? 1 : 0);
      }
  }
}

TEST(Dilate, MonotoneAndExtensive) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    BinaryMask a(30, 30), b(30, 30);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.values()[i] = rng.uniform() < 0.05;
      b.values()[i] = a.values()[i] || rng.uniform() < 0.05;
    }
    const double r = rng.uniform(0.0, 5.0);
    EXPECT_TRUE(is_subset(a, dilate(a, r)));
    EXPECT_TRUE(is_subset(dilate(a, r), dilate(b, r)));
  }
}

TEST(Morphology, CloseFillsGapAndSmallComponentsGo) {
  BinaryMask m(30, 11);
  for (int y = 3; y <= 7; ++y)
    for (int x = 2; x < 28; ++x)
      if (x != 15) m(x, y) = 1;
  const BinaryMask c = close(m, 2.0);
  EXPECT_EQ(c(15, 5), 1);
  EXPECT_TRUE(is_subset(m, c));
  BinaryMask s(10, 10);
  s(1, 1) = 1;
  for (int x = 4; x < 9; ++x) s(x, 6) = 1;
  const BinaryMask r = remove_small_components(s, 3);
  EXPECT_EQ(r(1, 1), 0);
  EXPECT_EQ(count_nonzero(r), 5u);
}

TEST(Rotate90, ExactPermutation) {
  Field f(3, 2);
  for (int i = 0; i < 6; ++i) f.values()[i] = i;
  const Field r = rotate90(f, 1);
  EXPECT_EQ(r.width(), 2);
  EXPECT_EQ(r.height(), 3);
  EXPECT_EQ(rotate90(rotate90(f, 2), 2), f);
  EXPECT_EQ(rotate90(r, 3), f);
}
