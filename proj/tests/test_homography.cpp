#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "testutil.hpp"
#include "unsuperpoint/geometry/homography.hpp"

using namespace unsuperpoint;

TEST(Homography, IdentityParamsGiveIdentityMatrix) {
  HomographyParams p;
  p.scale_min = p.scale_max = 1.0;
  p.rotation_min = p.rotation_max = 0.0;
  p.perspective = 0.0;
  Homography h = sample_homography(p, 64, 64, 7);
  EXPECT_TRUE(h.matrix.isApprox(Eigen::Matrix3d::Identity(), 1e-9));

  PointArray pts = {{3.5, 7.25}, {10, 20}, {63, 0}};
  PointArray out = transform_points(h, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((out[i] - pts[i]).norm(), 1e-9);
}

TEST(Homography, SameSeedSameMatrix) {
  HomographyParams p;
  Homography a = sample_homography(p, 120, 160, 42);
  Homography b = sample_homography(p, 120, 160, 42);
  EXPECT_EQ(0, std::memcmp(a.matrix.data(), b.matrix.data(), sizeof(double) * 9));
  Homography c = sample_homography(p, 120, 160, 43);
  EXPECT_FALSE(a.matrix.isApprox(c.matrix, 1e-12));
}

TEST(Homography, MonteCarloSamplesStayInvertibleAndBounded) {
  HomographyParams p;
  p.scale_min = 0.9;
  p.scale_max = 1.1;
  p.rotation_min = -0.26;
  p.rotation_max = 0.26;
  p.perspective = 0.1;
  const int h = 120, w = 160;
  for (int seed = 0; seed < 1000; ++seed) {
    Homography t = sample_homography(p, h, w, seed);
    ASSERT_TRUE(t.invertible());
    // center-ish region must land inside a 2x padded frame
    for (double fy : {0.35, 0.5, 0.65})
      for (double fx : {0.35, 0.5, 0.65}) {
        auto q = t.apply(Vec2d(fx * w, fy * h));
        ASSERT_TRUE(q.has_value());
        EXPECT_GT(q->x(), -0.5 * w);
        EXPECT_LT(q->x(), 1.5 * w);
        EXPECT_GT(q->y(), -0.5 * h);
        EXPECT_LT(q->y(), 1.5 * h);
      }
  }
}

TEST(Homography, TranslationMovesPoints) {
  Homography t = Homography::translation(3, 4);
  PointArray out = transform_points(t, {{0, 0}});
  EXPECT_NEAR(out[0].x(), 3.0, 1e-12);
  EXPECT_NEAR(out[0].y(), 4.0, 1e-12);
}

TEST(Homography, RoundTripThroughInverse) {
  HomographyParams p;
  for (int seed = 1; seed <= 20; ++seed) {
    Homography t = sample_homography(p, 96, 128, seed);
    Rng rng(seed * 977);
    PointArray pts;
    for (int i = 0; i < 50; ++i) pts.emplace_back(rng.uniform(0, 127), rng.uniform(0, 95));
    PointArray fwd = transform_points(t, pts);
    PointArray back = transform_points(t.inverse(), fwd);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((back[i] - pts[i]).norm(), 1e-6);
  }
}

TEST(Homography, PointAtInfinityFlaggedNotFatal) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = -0.1;  // w = 1 - 0.1 x, vanishes at x = 10
  Homography h(m);
  std::vector<bool> valid;
  PointArray out = transform_points(h, {{10.0, 0.0}, {1.0, 1.0}}, &valid);
  EXPECT_FALSE(valid[0]);
  EXPECT_TRUE(valid[1]);
  EXPECT_EQ(out.size(), 2u);
}

TEST(WarpImage, IdentityReturnsSameImage) {
  Image img = testutil::synthetic_image(48, 64, 3);
  Image out = warp_image(Homography::identity(), img);
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_NEAR(out.data[i], img.data[i], 1e-6);
}

TEST(WarpImage, TranslationShiftsContentAndZeroFills) {
  Image img = testutil::synthetic_image(40, 56, 11);
  Homography t = Homography::translation(8, 0);
  Image out = warp_image(t, img);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (x >= 8)
          ASSERT_NEAR(out.at(y, x, c), img.at(y, x - 8, c), 1e-5);
        else
          ASSERT_EQ(out.at(y, x, c), 0.0f);
      }
    }
  }
}

TEST(WarpImage, WarpInverseWarpRoundTripOnSmoothImage) {
  const int h = 64, w = 80;
  Image img(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(y, x, 0) = 0.5f + 0.4f * std::sin(x * 0.15f) * std::cos(y * 0.11f);

  HomographyParams p;
  p.perspective = 0.05;
  Homography t = sample_homography(p, h, w, 5);
  Image warped = warp_image(t, img);
  Image back = warp_image(t.inverse(), warped);

  double err = 0;
  int count = 0;
  for (int y = h / 4; y < 3 * h / 4; ++y)
    for (int x = w / 4; x < 3 * w / 4; ++x) {
      err += std::abs(back.at(y, x, 0) - img.at(y, x, 0));
      ++count;
    }
  EXPECT_LT(err / count, 2.0 / 255.0);
}

TEST(CornerError, IdenticalHomographiesGiveZero) {
  HomographyParams p;
  for (int seed = 0; seed < 10; ++seed) {
    Homography t = sample_homography(p, 64, 96, seed);
    EXPECT_DOUBLE_EQ(homography_corner_error(t, t, 64, 96), 0.0);
  }
}

TEST(CornerError, UnitTranslationIsOnePixel) {
  HomographyParams p;
  Homography t = sample_homography(p, 48, 64, 9);
  Homography shifted = Homography::translation(1, 0).compose(t);
  EXPECT_NEAR(homography_corner_error(t, shifted, 48, 64), 1.0, 1e-9);
}

TEST(CornerError, ScaleByTwoHandValue) {
  // corners of a 10x10 frame: (0,0),(9,0),(0,9),(9,9); scale-by-2 moves
  // them by 0, 9, 9, 9*sqrt(2)
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = s(1, 1) = 2.0;
  double expected = (0.0 + 9.0 + 9.0 + 9.0 * std::sqrt(2.0)) / 4.0;
  EXPECT_NEAR(homography_corner_error(Homography::identity(), Homography(s), 10, 10), expected,
              1e-12);
}

TEST(HomographyText, RoundTripsThroughStream) {
  HomographyParams p;
  Homography t = sample_homography(p, 120, 160, 21);
  std::stringstream ss;
  write_homography_text(ss, t);
  Homography back = read_homography_text(ss);
  EXPECT_TRUE(t.matrix.isApprox(back.matrix, 1e-15));
}

TEST(FourPointSolver, RecoversKnownHomography) {
  HomographyParams p;
  Homography t = sample_homography(p, 64, 64, 77);
  std::array<Vec2d, 4> src = {Vec2d(0, 0), Vec2d(63, 0), Vec2d(63, 63), Vec2d(0, 63)};
  std::array<Vec2d, 4> dst;
  for (int i = 0; i < 4; ++i) dst[i] = *t.apply(src[i]);
  auto est = homography_from_four_points(src, dst);
  ASSERT_TRUE(est.has_value());
  EXPECT_LT(homography_corner_error(t, *est, 64, 64), 1e-8);
}

TEST(FourPointSolver, CollinearPointsRejected) {
  std::array<Vec2d, 4> src = {Vec2d(0, 0), Vec2d(1, 1), Vec2d(2, 2), Vec2d(3, 3)};
  std::array<Vec2d, 4> dst = {Vec2d(0, 0), Vec2d(1, 0), Vec2d(1, 1), Vec2d(0, 1)};
  EXPECT_FALSE(homography_from_four_points(src, dst).has_value());
}
