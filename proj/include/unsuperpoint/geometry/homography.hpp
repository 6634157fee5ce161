#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "unsuperpoint/core/image.hpp"
#include "unsuperpoint/core/rng.hpp"

namespace unsuperpoint {

using Vec2d = Eigen::Vector2d;
using PointArray = std::vector<Vec2d>;

constexpr double kHomogeneousEps = 1e-12;

// 3x3 projective transform on pixel coordinates, source frame -> target
// frame. Normalized so the bottom-right entry is 1.
struct Homography {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();

  Homography() = default;
  explicit Homography(const Eigen::Matrix3d& m) : matrix(m) { normalize(); }

  static Homography identity() { return Homography(); }

  static Homography translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
  }

  void normalize() {
    if (std::abs(matrix(2, 2)) > kHomogeneousEps) matrix /= matrix(2, 2);
  }

  bool invertible() const { return std::abs(matrix.determinant()) > kHomogeneousEps; }

  Homography inverse() const {
    if (!invertible()) throw std::runtime_error("Homography::inverse: singular matrix");
    return Homography(Eigen::Matrix3d(matrix.inverse()));
  }

  Homography compose(const Homography& inner) const {
    // (*this) applied after inner
    return Homography(Eigen::Matrix3d(matrix * inner.matrix));
  }

  // Maps one point; returns nullopt when the point is at infinity.
  std::optional<Vec2d> apply(const Vec2d& p) const {
    Eigen::Vector3d q = matrix * Eigen::Vector3d(p.x(), p.y(), 1.0);
    if (std::abs(q.z()) < kHomogeneousEps) return std::nullopt;
    return Vec2d(q.x() / q.z(), q.y() / q.z());
  }

  // Jacobian of the mapped point w.r.t. the source point.
  Eigen::Matrix2d jacobian(const Vec2d& p) const {
    const Eigen::Matrix3d& h = matrix;
    double w = h(2, 0) * p.x() + h(2, 1) * p.y() + h(2, 2);
    double u = h(0, 0) * p.x() + h(0, 1) * p.y() + h(0, 2);
    double v = h(1, 0) * p.x() + h(1, 1) * p.y() + h(1, 2);
    Eigen::Matrix2d j;
    double iw = 1.0 / w, iw2 = iw * iw;
    j(0, 0) = h(0, 0) * iw - u * h(2, 0) * iw2;
    j(0, 1) = h(0, 1) * iw - u * h(2, 1) * iw2;
    j(1, 0) = h(1, 0) * iw - v * h(2, 0) * iw2;
    j(1, 1) = h(1, 1) * iw - v * h(2, 1) * iw2;
    return j;
  }
};

struct HomographyParams {
  double scale_min = 0.85;
  double scale_max = 1.15;
  double rotation_min = -15.0 * 3.14159265358979323846 / 180.0;
  double rotation_max = 15.0 * 3.14159265358979323846 / 180.0;
  // Max per-corner displacement as a fraction of min(H, W).
  double perspective = 0.1;

  void validate() const {
    if (scale_min <= 0.0 || scale_max < scale_min)
      throw std::invalid_argument("HomographyParams: scale interval must be positive and non-empty");
    if (rotation_max < rotation_min)
      throw std::invalid_argument("HomographyParams: rotation interval is empty");
    if (perspective < 0.0) throw std::invalid_argument("HomographyParams: perspective must be >= 0");
  }
};

// Exact homography through 4 point correspondences. Solves the 8x8 linear
// system with h22 fixed to 1; returns nullopt for degenerate configurations.
inline std::optional<Homography> homography_from_four_points(const std::array<Vec2d, 4>& src,
                                                             const std::array<Vec2d, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    double x = src[i].x(), y = src[i].y();
    double u = dst[i].x(), v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
  if (!lu.isInvertible()) return std::nullopt;
  Eigen::Matrix<double, 8, 1> h = lu.solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  Homography out(m);
  if (!out.invertible()) return std::nullopt;
  return out;
}

// Least-squares DLT over n >= 4 correspondences with Hartley normalization.
inline std::optional<Homography> homography_dlt(const PointArray& src, const PointArray& dst) {
  const std::size_t n = src.size();
  if (n < 4 || dst.size() != n) return std::nullopt;

  auto normalizer = [](const PointArray& pts) {
    Vec2d mean = Vec2d::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double dist = 0;
    for (const auto& p : pts) dist += (p - mean).norm();
    dist /= static_cast<double>(pts.size());
    double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
    Eigen::Matrix3d t;
    t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return t;
  };
  Eigen::Matrix3d ts = normalizer(src), td = normalizer(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    Vec2d p = (ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1)).hnormalized();
    Vec2d q = (td * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1)).hnormalized();
    a.row(2 * i) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
    a.row(2 * i + 1) << 0, 0, 0, p.x(), p.y(), 1, -q.y() * p.x(), -q.y() * p.y(), -q.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  m = td.inverse() * m * ts;
  if (std::abs(m(2, 2)) < kHomogeneousEps || std::abs(m.determinant()) < kHomogeneousEps)
    return std::nullopt;
  return Homography(m);
}

// Random homography about the image center: center-translate, scale,
// rotate, perspective (random corner displacement), un-translate.
// Deterministic for a fixed seed.
inline Homography sample_homography(const HomographyParams& params, int image_h, int image_w,
                                    std::uint64_t seed) {
  params.validate();
  if (image_h < 16 || image_w < 16)
    throw std::invalid_argument("sample_homography: image must be at least 16x16");

  Rng rng(Rng::derive(seed, 0x686f6d6fULL));
  const double cx = (image_w - 1) / 2.0, cy = (image_h - 1) / 2.0;
  Eigen::Matrix3d center = Eigen::Matrix3d::Identity(), uncenter = Eigen::Matrix3d::Identity();
  center(0, 2) = -cx;
  center(1, 2) = -cy;
  uncenter(0, 2) = cx;
  uncenter(1, 2) = cy;

  const int max_retries = 16;
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    double s = rng.uniform(params.scale_min, params.scale_max);
    double theta = rng.uniform(params.rotation_min, params.rotation_max);

    Eigen::Matrix3d scale = Eigen::Matrix3d::Identity();
    scale(0, 0) = scale(1, 1) = s;
    Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
    rot(0, 0) = std::cos(theta);
    rot(0, 1) = -std::sin(theta);
    rot(1, 0) = std::sin(theta);
    rot(1, 1) = std::cos(theta);

    // Perspective factor: displace the centered frame corners by up to
    // perspective * min(H, W) and fit the exact homography.
    double d = params.perspective * std::min(image_h, image_w);
    std::array<Vec2d, 4> corners = {Vec2d(-cx, -cy), Vec2d(cx, -cy), Vec2d(cx, cy), Vec2d(-cx, cy)};
    std::array<Vec2d, 4> moved;
    for (int i = 0; i < 4; ++i)
      moved[i] = corners[i] + Vec2d(rng.uniform(-d, d), rng.uniform(-d, d));
    auto persp = homography_from_four_points(corners, moved);
    if (!persp) continue;

    Eigen::Matrix3d m = uncenter * persp->matrix * rot * scale * center;
    Homography h(m);
    if (h.invertible()) return h;
  }
  throw std::runtime_error("sample_homography: failed to sample an invertible homography");
}

// Row-wise homogeneous transform. Points mapping to infinity keep their
// input value and get valid[i] = false.
inline PointArray transform_points(const Homography& h, const PointArray& points,
                                   std::vector<bool>* valid = nullptr) {
  PointArray out(points.size());
  if (valid) valid->assign(points.size(), true);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto q = h.apply(points[i]);
    if (q) {
      out[i] = *q;
    } else {
      out[i] = points[i];
      if (valid) (*valid)[i] = false;
    }
  }
  return out;
}

// Inverse-mapped bilinear warp into a same-size frame; pixels that fall
// outside the source read as 0.
inline Image warp_image(const Homography& h, const Image& image) {
  if (image.empty()) throw std::invalid_argument("warp_image: empty image");
  Homography inv = h.inverse();
  Image out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      auto src = inv.apply(Vec2d(x, y));
      if (!src) continue;
      for (int c = 0; c < image.channels; ++c)
        out.at(y, x, c) = image.sample_bilinear(src->x(), src->y(), c);
    }
  }
  return out;
}

// Mean distance between the four image corners mapped by the two
// homographies.
inline double homography_corner_error(const Homography& h_gt, const Homography& h_est, int image_h,
                                      int image_w) {
  std::array<Vec2d, 4> corners = {Vec2d(0, 0), Vec2d(image_w - 1, 0), Vec2d(0, image_h - 1),
                                  Vec2d(image_w - 1, image_h - 1)};
  double sum = 0;
  for (const auto& c : corners) {
    auto a = h_gt.apply(c), b = h_est.apply(c);
    if (!a || !b) return std::numeric_limits<double>::infinity();
    sum += (*a - *b).norm();
  }
  return sum / 4.0;
}

// HPatches H_1_k convention: 9 whitespace-separated decimals, row-major.
inline Homography read_homography_text(std::istream& in) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(in >> m(r, c))) throw std::runtime_error("homography text: expected 9 numbers");
  return Homography(m);
}

inline Homography load_homography(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open homography file: " + path);
  return read_homography_text(in);
}

inline void write_homography_text(std::ostream& out, const Homography& h) {
  out.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out << h.matrix(r, c) << (c == 2 ? "" : " ");
    out << "\n";
  }
}

inline void save_homography(const std::string& path, const Homography& h) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write homography file: " + path);
  write_homography_text(out, h);
}

}  // namespace unsuperpoint
