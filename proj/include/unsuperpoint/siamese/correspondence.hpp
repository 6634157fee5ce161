#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

#include "unsuperpoint/geometry/homography.hpp"

namespace unsuperpoint {

// A-branch point paired with its nearest B-branch neighbor.
struct PointPair {
  int a_index = 0;
  int b_index = 0;
  double distance = 0.0;
};

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// G[i][j] = || p^{A->B}_i - p^B_j ||. Rows for invalid A points (mapped
// outside the other frame or to infinity) are +inf so they never pair.
inline Eigen::MatrixXd compute_distance_matrix(const PointArray& points_a_in_b,
                                               const PointArray& points_b,
                                               const std::vector<bool>* a_valid = nullptr) {
  const Eigen::Index ma = static_cast<Eigen::Index>(points_a_in_b.size());
  const Eigen::Index mb = static_cast<Eigen::Index>(points_b.size());
  Eigen::MatrixXd g(ma, mb);
  const double inf = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ma; ++i) {
    if (a_valid && !(*a_valid)[static_cast<std::size_t>(i)]) {
      g.row(i).setConstant(inf);
      continue;
    }
    const Vec2d& p = points_a_in_b[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < mb; ++j)
      g(i, j) = (p - points_b[static_cast<std::size_t>(j)]).norm();
  }
  return g;
}

// For each A row, the nearest B point (lowest index wins ties) becomes a
// pair iff its distance is below epsilon. d_bar is NaN when no pair
// exists; callers skip the correspondence losses in that case.
inline std::vector<PointPair> find_pairs(const Eigen::MatrixXd& g, double epsilon_correspond,
                                         double* d_bar = nullptr) {
  std::vector<PointPair> pairs;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    Eigen::Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (g(i, j) < best_d) {
        best_d = g(i, j);
        best = j;
      }
    }
    if (best >= 0 && best_d < epsilon_correspond) {
      pairs.push_back({static_cast<int>(i), static_cast<int>(best), best_d});
      sum += best_d;
    }
  }
  if (d_bar)
    *d_bar = pairs.empty() ? std::numeric_limits<double>::quiet_NaN()
                           : sum / static_cast<double>(pairs.size());
  return pairs;
}

constexpr double kCorrespondenceMatrixRadius = 8.0;

// C[i][j] = 1 iff g_ij <= 8 px. A point may correspond to several
// points here, unlike the pair list.
inline BinaryMatrix compute_correspondence_matrix(const Eigen::MatrixXd& g) {
  BinaryMatrix c(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      c(i, j) = g(i, j) <= kCorrespondenceMatrixRadius ? 1 : 0;
  return c;
}

// Everything the losses need about how two branches' points relate.
struct CorrespondenceSet {
  Eigen::MatrixXd g;
  BinaryMatrix c;
  std::vector<PointPair> pairs;
  double d_bar = std::numeric_limits<double>::quiet_NaN();
  std::vector<bool> a_valid;     // A points whose T-image lies in B's frame
  PointArray a_in_b;             // transformed A positions

  std::size_t pair_count() const { return pairs.size(); }
};

inline CorrespondenceSet build_correspondences(const PointArray& points_a,
                                               const PointArray& points_b, const Homography& t,
                                               int frame_h, int frame_w,
                                               double epsilon_correspond) {
  CorrespondenceSet set;
  std::vector<bool> finite;
  set.a_in_b = transform_points(t, points_a, &finite);
  set.a_valid.resize(points_a.size());
  for (std::size_t i = 0; i < points_a.size(); ++i) {
    const Vec2d& p = set.a_in_b[i];
    set.a_valid[i] = finite[i] && p.x() >= 0.0 && p.x() < frame_w && p.y() >= 0.0 && p.y() < frame_h;
  }
  set.g = compute_distance_matrix(set.a_in_b, points_b, &set.a_valid);
  set.pairs = find_pairs(set.g, epsilon_correspond, &set.d_bar);
  set.c = compute_correspondence_matrix(set.g);
  return set;
}

}  // namespace unsuperpoint
