#include "jscc/classifier.hpp"

#include <limits>
#include <string>

#include "jscc/error.hpp"

namespace jscc::classifier {

namespace {

std::size_t numerical_rank(const Eigen::VectorXd& singular, std::size_t rows, std::size_t cols) {
  if (singular.size() == 0 || singular(0) <= 0.0) return 0;
  const double tol = static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * singular(0);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < singular.size(); ++i) rank += singular(i) > tol;
  return rank;
}

}  // namespace

SubspaceModel fit_subspaces(const Eigen::MatrixXd& features, std::span<const int> labels,
                            std::size_t classes, const SubspacePolicy& policy) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) {
    throw DimensionError("fit_subspaces: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " feature rows");
  }
  if (policy.kind == SubspacePolicy::Kind::energy && !(policy.energy > 0.0 && policy.energy <= 1.0)) {
    throw ConfigError("subspace energy fraction must lie in (0, 1]");
  }
  std::vector<std::vector<Eigen::Index>> members(classes);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw RangeError("fit_subspaces: label " + std::to_string(labels[i]) + " out of range");
    }
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }
  SubspaceModel model;
  for (std::size_t j = 0; j < classes; ++j) {
    if (members[j].empty()) throw FitError("class " + std::to_string(j) + " has no training samples");
    Eigen::MatrixXd block = features(members[j], Eigen::all);
    ClassSubspace sub;
    sub.mean = block.colwise().mean().transpose();
    block.rowwise() -= sub.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(block, Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const std::size_t rank = numerical_rank(s, static_cast<std::size_t>(block.rows()),
                                            static_cast<std::size_t>(block.cols()));
    std::size_t p = 0;
    if (policy.kind == SubspacePolicy::Kind::fixed) {
      p = std::min(policy.components, rank);
    } else if (rank > 0) {
      const double total = s.head(static_cast<Eigen::Index>(rank)).squaredNorm();
      double captured = 0.0;
      while (p < rank && captured < policy.energy * total) {
        captured += s(static_cast<Eigen::Index>(p)) * s(static_cast<Eigen::Index>(p));
        ++p;
      }
    }
    sub.basis = svd.matrixV().leftCols(static_cast<Eigen::Index>(p));
    model.classes.push_back(std::move(sub));
  }
  return model;
}

double residual(const ClassSubspace& subspace, const Eigen::Ref<const Eigen::VectorXd>& feature) {
  const Eigen::VectorXd u = feature - subspace.mean;
  if (subspace.basis.cols() == 0) return u.squaredNorm();
  return u.squaredNorm() - (subspace.basis.transpose() * u).squaredNorm();
}

int classify(const SubspaceModel& model, const Eigen::Ref<const Eigen::VectorXd>& feature) {
  if (model.classes.empty()) throw DependencyError("classify: subspace model is not fitted");
  if (static_cast<std::size_t>(feature.size()) != model.dim()) {
    throw DimensionError("classify: feature length " + std::to_string(feature.size()) + ", model expects " +
                         std::to_string(model.dim()));
  }
  int best = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < model.classes.size(); ++j) {
    const double r = residual(model.classes[j], feature);
    if (r < best_residual) {
      best_residual = r;
      best = static_cast<int>(j);
    }
  }
  return best;
}

std::vector<int> classify_rows(const SubspaceModel& model, const Eigen::MatrixXd& features) {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = classify(model, Eigen::VectorXd(features.row(i).transpose()));
  }
  return out;
}

}  // namespace jscc::classifier
