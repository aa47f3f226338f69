#pragma once

#include <span>

#include "jscc/autodiff.hpp"
#include "jscc/data.hpp"

namespace jscc::objectives {

// Feature matrices are laid out one sample per row: Z is [N x m], i.e. the
// transpose of the column-stacked feature matrix. Z^T Z is then the m x m
// Gram form and Z Z^T the N x N one.

enum class LogBase { natural, binary };

struct RateParams {
  double eps_sq = 0.5;
  double beta = 1.0;
  LogBase log_base = LogBase::natural;

  void validate() const;
};

/// Which determinant identity to evaluate: det(I + a Z^T Z) or det(I + a Z Z^T).
enum class GramRoute { automatic, feature, sample };

/// 1/2 log det(I + m / (N eps^2) Z^T Z).
ad::Tensor coding_rate(const ad::Tensor& z, const RateParams& params,
                       GramRoute route = GramRoute::automatic);

/// Sum over classes of tr(Pi_j)/(2N) log det(I + m / (tr(Pi_j) eps^2) Z_j^T Z_j).
/// Empty classes contribute nothing.
ad::Tensor class_rate(const ad::Tensor& z, const data::MembershipMatrix& pi,
                      const RateParams& params, GramRoute route = GramRoute::automatic);

/// coding_rate - class_rate.
ad::Tensor rate_reduction(const ad::Tensor& z, const data::MembershipMatrix& pi,
                          const RateParams& params);

/// Mean of squared differences over all N * B entries.
ad::Tensor mse_loss(const ad::Tensor& s, const ad::Tensor& s_hat);

struct UnifiedLoss {
  ad::Tensor total;
  ad::Tensor rate_reduction;
  ad::Tensor mse;
};

/// -rate_reduction(z) + beta * mse(s, s_hat).
UnifiedLoss unified_loss(const ad::Tensor& z, const data::MembershipMatrix& pi,
                         const ad::Tensor& s, const ad::Tensor& s_hat, const RateParams& params);

struct SsimConstants {
  double o1 = 0.01 * 0.01;
  double o2 = 0.03 * 0.03;
};

/// SSIM from whole-image moments (population variance and covariance).
double ssim(std::span<const double> s, std::span<const double> s_hat, const SsimConstants& c = {});

/// 1 - mean SSIM over the rows of [N x B] image matrices.
ad::Tensor ssim_loss(const ad::Tensor& s, const ad::Tensor& s_hat, const SsimConstants& c = {});

ad::Tensor one_hot(std::span<const int> labels, std::size_t classes);

/// -(1/N) sum_n onehot_n . log z_n for row-stochastic predictions z.
/// Rows must be nonnegative and sum to one within 1e-6.
ad::Tensor cross_entropy(const ad::Tensor& z, const ad::Tensor& targets);

}  // namespace jscc::objectives
