#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace jscc::classifier {

struct SubspacePolicy {
  enum class Kind { fixed, energy };
  Kind kind = Kind::fixed;
  /// Upper bound on components for the fixed policy.
  std::size_t components = 10;
  /// Captured energy fraction for the energy policy.
  double energy = 0.9;
};

struct ClassSubspace {
  Eigen::VectorXd mean;
  /// m x p, orthonormal columns.
  Eigen::MatrixXd basis;
};

struct SubspaceModel {
  std::vector<ClassSubspace> classes;
  std::size_t dim() const { return classes.empty() ? 0 : static_cast<std::size_t>(classes.front().mean.size()); }
};

/// Fits one affine principal subspace per class from [N x m] features.
SubspaceModel fit_subspaces(const Eigen::MatrixXd& features, std::span<const int> labels,
                            std::size_t classes, const SubspacePolicy& policy = {});

/// ||u - mean||^2 - ||basis^T (u - mean)||^2.
double residual(const ClassSubspace& subspace, const Eigen::Ref<const Eigen::VectorXd>& feature);

/// Class with the smallest residual; ties go to the lowest index.
int classify(const SubspaceModel& model, const Eigen::Ref<const Eigen::VectorXd>& feature);
std::vector<int> classify_rows(const SubspaceModel& model, const Eigen::MatrixXd& features);

}  // namespace jscc::classifier
