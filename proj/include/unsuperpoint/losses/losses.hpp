#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "unsuperpoint/geometry/homography.hpp"
#include "unsuperpoint/siamese/correspondence.hpp"

namespace unsuperpoint {

struct LossWeights {
  double alpha_usp = 1.0;
  double alpha_position = 1.0;
  double alpha_score = 2.0;
  double alpha_uni_xy = 100.0;
  double alpha_desc = 0.001;
  double alpha_decorr = 0.03;
  double m_p = 1.0;    // positive margin
  double m_n = 0.2;    // negative margin
  double lambda_d = 250.0;
};

struct LossBreakdown {
  double usp = 0.0;
  double position_term = 0.0;  // sum of d_k, unweighted
  double score_term = 0.0;     // sum of squared score differences
  double usp_term = 0.0;       // sum of s_hat * (d_k - d_bar)
  double uni_xy = 0.0;         // sum of the four per-branch axis terms
  double desc = 0.0;
  double decorr = 0.0;
  double total = 0.0;
  int pair_count = 0;
  bool correspondence_free = false;
};

// ---------------------------------------------------------------------------
// Unsupervised point loss over K point-pairs.

struct UspTerms {
  double usp = 0.0, position_term = 0.0, score_term = 0.0, usp_term = 0.0;
};

struct UspGrads {
  Eigen::VectorXd d_distance;  // of the weighted usp total
  Eigen::VectorXd d_score_a;
  Eigen::VectorXd d_score_b;
};

// distances[k] = d_k; score_a/b[k] = pair scores per branch.
inline UspTerms usp_loss(const Eigen::VectorXd& distances, const Eigen::VectorXd& score_a,
                         const Eigen::VectorXd& score_b, const LossWeights& w,
                         UspGrads* grads = nullptr) {
  const Eigen::Index k = distances.size();
  UspTerms t;
  if (k == 0) return t;
  const double d_bar = distances.mean();
  Eigen::VectorXd joint = 0.5 * (score_a + score_b);
  const double joint_mean = joint.mean();

  t.position_term = distances.sum();
  t.score_term = (score_a - score_b).squaredNorm();
  t.usp_term = (joint.array() * (distances.array() - d_bar)).sum();
  t.usp = w.alpha_position * t.position_term + w.alpha_score * t.score_term + t.usp_term;

  if (grads) {
    grads->d_distance = Eigen::VectorXd::Constant(k, w.alpha_position) +
                        (joint.array() - joint_mean).matrix();
    Eigen::VectorXd score_diff = 2.0 * w.alpha_score * (score_a - score_b);
    Eigen::VectorXd dev = 0.5 * (distances.array() - d_bar).matrix();
    grads->d_score_a = score_diff + dev;
    grads->d_score_b = -score_diff + dev;
  }
  return t;
}

// ---------------------------------------------------------------------------
// Distance of a sample to the uniform distribution on [a, b]: squared
// deviation of the ascendingly sorted, normalized values from the
// straight line through 0 and 1. Differentiable through the sort by
// routing each rank's gradient back to the value's original position;
// exact ties take their targets in stable order.

inline double uniform_distance(const std::vector<double>& values, double a, double b,
                               std::vector<double>* grad = nullptr) {
  const std::size_t l = values.size();
  if (l < 2) throw std::invalid_argument("uniform_distance: need at least 2 values");
  if (!(b > a)) throw std::invalid_argument("uniform_distance: interval must satisfy b > a");

  std::vector<int> order(l);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return values[x] < values[y]; });

  const double inv_range = 1.0 / (b - a);
  const double denom = static_cast<double>(l - 1);
  double loss = 0.0;
  if (grad) grad->assign(l, 0.0);
  for (std::size_t rank = 0; rank < l; ++rank) {
    double normalized = (values[order[rank]] - a) * inv_range;
    double target = static_cast<double>(rank) / denom;
    double diff = normalized - target;
    loss += diff * diff;
    if (grad) (*grad)[order[rank]] = 2.0 * diff * inv_range;
  }
  return loss;
}

// Uniform regularizer on relative coordinates, per branch and per axis.
// rel_* are M x 2 with x in column 0 and y in column 1.
inline double uni_xy_loss(const Eigen::MatrixX2d& rel_a, const Eigen::MatrixX2d& rel_b,
                          Eigen::MatrixX2d* grad_a = nullptr, Eigen::MatrixX2d* grad_b = nullptr) {
  auto branch = [](const Eigen::MatrixX2d& rel, Eigen::MatrixX2d* grad) {
    std::vector<double> vals(static_cast<std::size_t>(rel.rows()));
    std::vector<double> g;
    if (grad) grad->setZero(rel.rows(), 2);
    double loss = 0.0;
    for (int axis = 0; axis < 2; ++axis) {
      for (Eigen::Index i = 0; i < rel.rows(); ++i) vals[static_cast<std::size_t>(i)] = rel(i, axis);
      loss += uniform_distance(vals, 0.0, 1.0, grad ? &g : nullptr);
      if (grad)
        for (Eigen::Index i = 0; i < rel.rows(); ++i) (*grad)(i, axis) = g[static_cast<std::size_t>(i)];
    }
    return loss;
  };
  return branch(rel_a, grad_a) + branch(rel_b, grad_b);
}

// ---------------------------------------------------------------------------
// Descriptor hinge loss over every A x B combination, positive pairs
// taken from the correspondence matrix and balanced by lambda_d.

inline double descriptor_loss(const Eigen::MatrixXd& desc_a, const Eigen::MatrixXd& desc_b,
                              const BinaryMatrix& c, const LossWeights& w,
                              Eigen::MatrixXd* grad_a = nullptr,
                              Eigen::MatrixXd* grad_b = nullptr) {
  if (desc_a.rows() != c.rows() || desc_b.rows() != c.cols())
    throw std::invalid_argument("descriptor_loss: correspondence matrix shape mismatch");
  Eigen::MatrixXd dot = desc_a * desc_b.transpose();
  double loss = 0.0;
  Eigen::MatrixXd ddot;
  if (grad_a || grad_b) ddot.setZero(dot.rows(), dot.cols());
  for (Eigen::Index i = 0; i < dot.rows(); ++i) {
    for (Eigen::Index j = 0; j < dot.cols(); ++j) {
      if (c(i, j)) {
        double slack = w.m_p - dot(i, j);
        if (slack > 0.0) {
          loss += w.lambda_d * slack;
          if (ddot.size()) ddot(i, j) -= w.lambda_d;
        }
      } else {
        double slack = dot(i, j) - w.m_n;
        if (slack > 0.0) {
          loss += slack;
          if (ddot.size()) ddot(i, j) += 1.0;
        }
      }
    }
  }
  if (grad_a) *grad_a = ddot * desc_b;
  if (grad_b) *grad_b = ddot.transpose() * desc_a;
  return loss;
}

// ---------------------------------------------------------------------------
// Sum of off-diagonal Pearson correlations between descriptor
// dimensions, per branch. Zero-variance columns contribute nothing and
// are reported through `zero_variance_flagged`.

inline double decorrelation_branch(const Eigen::MatrixXd& desc, Eigen::MatrixXd* grad,
                                   bool* zero_variance_flagged) {
  const Eigen::Index m = desc.rows(), f = desc.cols();
  if (m < 2 || f < 2)
    throw std::invalid_argument("decorrelation_loss: need at least 2 points and 2 dimensions");
  Eigen::RowVectorXd mean = desc.colwise().mean();
  Eigen::MatrixXd centered = desc.rowwise() - mean;
  Eigen::VectorXd norms = centered.colwise().norm();

  Eigen::MatrixXd unit(m, f);
  std::vector<bool> valid(static_cast<std::size_t>(f));
  int num_valid = 0;
  for (Eigen::Index j = 0; j < f; ++j) {
    bool ok = norms(j) > 1e-12;
    valid[static_cast<std::size_t>(j)] = ok;
    if (ok) {
      unit.col(j) = centered.col(j) / norms(j);
      ++num_valid;
    } else {
      unit.col(j).setZero();
      if (zero_variance_flagged) *zero_variance_flagged = true;
    }
  }
  Eigen::MatrixXd r = unit.transpose() * unit;
  double loss = r.sum() - r.trace();

  if (grad) {
    Eigen::VectorXd s = unit.rowwise().sum();
    Eigen::MatrixXd dunit(m, f);
    for (Eigen::Index j = 0; j < f; ++j) {
      if (!valid[static_cast<std::size_t>(j)]) {
        dunit.col(j).setZero();
        continue;
      }
      dunit.col(j) = 2.0 * (s - unit.col(j));
    }
    grad->resize(m, f);
    for (Eigen::Index j = 0; j < f; ++j) {
      if (!valid[static_cast<std::size_t>(j)]) {
        grad->col(j).setZero();
        continue;
      }
      double proj = unit.col(j).dot(dunit.col(j));
      Eigen::VectorXd da = (dunit.col(j) - unit.col(j) * proj) / norms(j);
      grad->col(j) = da.array() - da.mean();  // centering backward
    }
  }
  return loss;
}

inline double decorrelation_loss(const Eigen::MatrixXd& desc_a, const Eigen::MatrixXd& desc_b,
                                 Eigen::MatrixXd* grad_a = nullptr,
                                 Eigen::MatrixXd* grad_b = nullptr,
                                 bool* zero_variance_flagged = nullptr) {
  return decorrelation_branch(desc_a, grad_a, zero_variance_flagged) +
         decorrelation_branch(desc_b, grad_b, zero_variance_flagged);
}

// ---------------------------------------------------------------------------
// Total loss over one branch pair.

// Double-precision view of one branch's point outputs.
struct BranchOutputs {
  Eigen::VectorXd scores;       // M
  Eigen::MatrixX2d positions;   // M x 2 pixel coords
  Eigen::MatrixX2d rel;         // M x 2 relative coords in [0, 1]
  Eigen::MatrixXd descriptors;  // M x F, unit rows expected
};

struct BranchGrads {
  Eigen::VectorXd dscores;
  Eigen::MatrixX2d dpositions;
  Eigen::MatrixX2d drel;
  Eigen::MatrixXd ddescriptors;

  void init(Eigen::Index m, Eigen::Index f) {
    dscores.setZero(m);
    dpositions.setZero(m, 2);
    drel.setZero(m, 2);
    ddescriptors.setZero(m, f);
  }
};

// Discrete decisions frozen at correspondence-build time. The loss is a
// smooth function of the continuous inputs given this structure, which
// is what finite-difference verification needs.
struct PairContext {
  std::vector<PointPair> pairs;  // only indices matter; distances are recomputed
  BinaryMatrix c;

  static PairContext from(const CorrespondenceSet& set) {
    PairContext ctx;
    ctx.pairs = set.pairs;
    ctx.c = set.c;
    return ctx;
  }
};

// L_total = a_usp L_usp + a_uni_xy L_uni + a_desc L_desc + a_decorr L_decorr.
// Pair distances are recomputed from the live positions through t so
// position gradients flow through the homography.
inline LossBreakdown total_loss(const BranchOutputs& a, const BranchOutputs& b,
                                const Homography& t, const PairContext& ctx, const LossWeights& w,
                                BranchGrads* grad_a = nullptr, BranchGrads* grad_b = nullptr,
                                bool* zero_variance_flagged = nullptr) {
  LossBreakdown out;
  const Eigen::Index k = static_cast<Eigen::Index>(ctx.pairs.size());
  out.pair_count = static_cast<int>(k);

  if (grad_a) grad_a->init(a.scores.size(), a.descriptors.cols());
  if (grad_b) grad_b->init(b.scores.size(), b.descriptors.cols());

  // usp over pairs
  if (k > 0) {
    Eigen::VectorXd d(k), sa(k), sb(k);
    std::vector<Vec2d> q(static_cast<std::size_t>(k));
    std::vector<Vec2d> diff(static_cast<std::size_t>(k));
    std::vector<bool> live(static_cast<std::size_t>(k), true);
    for (Eigen::Index idx = 0; idx < k; ++idx) {
      const PointPair& pr = ctx.pairs[static_cast<std::size_t>(idx)];
      Vec2d pa(a.positions(pr.a_index, 0), a.positions(pr.a_index, 1));
      Vec2d pb(b.positions(pr.b_index, 0), b.positions(pr.b_index, 1));
      auto mapped = t.apply(pa);
      if (!mapped) {
        live[static_cast<std::size_t>(idx)] = false;
        q[static_cast<std::size_t>(idx)] = pa;
      } else {
        q[static_cast<std::size_t>(idx)] = *mapped;
      }
      diff[static_cast<std::size_t>(idx)] = q[static_cast<std::size_t>(idx)] - pb;
      d(idx) = diff[static_cast<std::size_t>(idx)].norm();
      sa(idx) = a.scores(pr.a_index);
      sb(idx) = b.scores(pr.b_index);
    }
    UspGrads ug;
    UspTerms terms = usp_loss(d, sa, sb, w, (grad_a || grad_b) ? &ug : nullptr);
    out.usp = terms.usp;
    out.position_term = terms.position_term;
    out.score_term = terms.score_term;
    out.usp_term = terms.usp_term;

    if (grad_a && grad_b) {
      for (Eigen::Index idx = 0; idx < k; ++idx) {
        const PointPair& pr = ctx.pairs[static_cast<std::size_t>(idx)];
        grad_a->dscores(pr.a_index) += w.alpha_usp * ug.d_score_a(idx);
        grad_b->dscores(pr.b_index) += w.alpha_usp * ug.d_score_b(idx);
        if (!live[static_cast<std::size_t>(idx)] || d(idx) < 1e-12) continue;
        Vec2d dd_dq = diff[static_cast<std::size_t>(idx)] / d(idx);
        double gd = w.alpha_usp * ug.d_distance(idx);
        Vec2d pa(a.positions(pr.a_index, 0), a.positions(pr.a_index, 1));
        Vec2d ga = t.jacobian(pa).transpose() * (gd * dd_dq);
        grad_a->dpositions(pr.a_index, 0) += ga.x();
        grad_a->dpositions(pr.a_index, 1) += ga.y();
        grad_b->dpositions(pr.b_index, 0) -= gd * dd_dq.x();
        grad_b->dpositions(pr.b_index, 1) -= gd * dd_dq.y();
      }
    }
  } else {
    out.correspondence_free = true;
  }

  // uniform regularizer on relative coordinates
  {
    Eigen::MatrixX2d gua, gub;
    out.uni_xy = uni_xy_loss(a.rel, b.rel, grad_a ? &gua : nullptr, grad_b ? &gub : nullptr);
    if (grad_a) grad_a->drel += w.alpha_uni_xy * gua;
    if (grad_b) grad_b->drel += w.alpha_uni_xy * gub;
  }

  // descriptor hinge + decorrelation
  {
    Eigen::MatrixXd gda, gdb;
    out.desc = descriptor_loss(a.descriptors, b.descriptors, ctx.c, w, grad_a ? &gda : nullptr,
                               grad_b ? &gdb : nullptr);
    if (grad_a) grad_a->ddescriptors += w.alpha_desc * gda;
    if (grad_b) grad_b->ddescriptors += w.alpha_desc * gdb;
  }
  {
    Eigen::MatrixXd gda, gdb;
    out.decorr = decorrelation_loss(a.descriptors, b.descriptors, grad_a ? &gda : nullptr,
                                    grad_b ? &gdb : nullptr, zero_variance_flagged);
    if (grad_a) grad_a->ddescriptors += w.alpha_decorr * gda;
    if (grad_b) grad_b->ddescriptors += w.alpha_decorr * gdb;
  }

  out.total = w.alpha_usp * out.usp + w.alpha_uni_xy * out.uni_xy + w.alpha_desc * out.desc +
              w.alpha_decorr * out.decorr;
  return out;
}

}  // namespace unsuperpoint
