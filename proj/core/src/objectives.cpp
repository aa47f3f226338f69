#include "jscc/objectives.hpp"

#include <cmath>
#include <numbers>

#include "jscc/error.hpp"

namespace jscc::objectives {

namespace {

void require_features(const ad::Tensor& z) {
  if (z.rank() != 2 || z.dim(0) == 0 || z.dim(1) == 0) {
    throw DimensionError("rate objectives expect [N x m] features, got " + ad::to_string(z.shape()));
  }
}

double log_scale(const RateParams& p) {
  return p.log_base == LogBase::natural ? 1.0 : 1.0 / std::numbers::ln2;
}

// 1/2 log det(I + alpha * G) with G the Gram form selected by `route`.
ad::Tensor half_logdet(const ad::Tensor& z, double alpha, GramRoute route) {
  const std::size_t n = z.dim(0), m = z.dim(1);
  const bool feature = route == GramRoute::feature || (route == GramRoute::automatic && m <= n);
  ad::Tensor gram = feature ? ad::matmul(ad::transpose(z), z) : ad::matmul(z, ad::transpose(z));
  const std::size_t d = feature ? m : n;
  return ad::scale(ad::logdet_psd(ad::add(ad::Tensor::eye(d), ad::scale(gram, alpha))), 0.5);
}

}  // namespace

void RateParams::validate() const {
  if (!(eps_sq > 0.0)) throw ConfigError("eps_sq must be positive");
  if (!(beta >= 0.0)) throw ConfigError("beta must be nonnegative");
}

ad::Tensor coding_rate(const ad::Tensor& z, const RateParams& params, GramRoute route) {
  require_features(z);
  params.validate();
  const double n = static_cast<double>(z.dim(0));
  const double m = static_cast<double>(z.dim(1));
  return ad::scale(half_logdet(z, m / (n * params.eps_sq), route), log_scale(params));
}

ad::Tensor class_rate(const ad::Tensor& z, const data::MembershipMatrix& pi,
                      const RateParams& params, GramRoute route) {
  require_features(z);
  params.validate();
  const std::size_t n = z.dim(0);
  if (pi.samples != n) {
    throw ContractError("membership covers " + std::to_string(pi.samples) + " samples, features have " +
                        std::to_string(n));
  }
  std::vector<int> owner(n, -1);
  for (std::size_t j = 0; j < pi.classes(); ++j) {
    for (std::size_t i : pi.members[j]) {
      if (i >= n || owner[i] != -1) throw ContractError("membership matrices do not partition the samples");
      owner[i] = static_cast<int>(j);
    }
  }
  for (int o : owner) {
    if (o < 0) throw ContractError("membership matrices do not partition the samples");
  }
  const double m = static_cast<double>(z.dim(1));
  ad::Tensor total = ad::Tensor::scalar(0.0);
  for (std::size_t j = 0; j < pi.classes(); ++j) {
    const std::size_t count = pi.trace(j);
    if (count == 0) continue;
    const double tr = static_cast<double>(count);
    ad::Tensor zj = ad::rows(z, pi.members[j]);
    // tr/(2N) log det = (tr/N) * (1/2 log det)
    ad::Tensor term = half_logdet(zj, m / (tr * params.eps_sq), route);
    total = ad::add(total, ad::scale(term, tr / static_cast<double>(n)));
  }
  return ad::scale(total, log_scale(params));
}

ad::Tensor rate_reduction(const ad::Tensor& z, const data::MembershipMatrix& pi,
                          const RateParams& params) {
  return ad::sub(coding_rate(z, params), class_rate(z, pi, params));
}

ad::Tensor mse_loss(const ad::Tensor& s, const ad::Tensor& s_hat) {
  if (s.shape() != s_hat.shape()) {
    throw DimensionError("mse: shapes " + ad::to_string(s.shape()) + " and " +
                         ad::to_string(s_hat.shape()) + " differ");
  }
  return ad::mean(ad::square(ad::sub(s, s_hat)));
}

UnifiedLoss unified_loss(const ad::Tensor& z, const data::MembershipMatrix& pi, const ad::Tensor& s,
                         const ad::Tensor& s_hat, const RateParams& params) {
  UnifiedLoss out;
  out.rate_reduction = rate_reduction(z, pi, params);
  out.mse = mse_loss(s, s_hat);
  out.total = ad::add(ad::scale(out.rate_reduction, -1.0), ad::scale(out.mse, params.beta));
  return out;
}

double ssim(std::span<const double> s, std::span<const double> s_hat, const SsimConstants& c) {
  if (s.size() != s_hat.size() || s.empty()) {
    throw DimensionError("ssim: image sizes " + std::to_string(s.size()) + " and " +
                         std::to_string(s_hat.size()) + " differ");
  }
  const double n = static_cast<double>(s.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    mx += s[i];
    my += s_hat[i];
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dx = s[i] - mx, dy = s_hat[i] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  return ((2.0 * mx * my + c.o1) * (2.0 * cxy + c.o2)) /
         ((mx * mx + my * my + c.o1) * (vx + vy + c.o2));
}

ad::Tensor ssim_loss(const ad::Tensor& s, const ad::Tensor& s_hat, const SsimConstants& c) {
  if (s.shape() != s_hat.shape() || s.rank() != 2) {
    throw DimensionError("ssim_loss: expected equal [N x B] shapes, got " + ad::to_string(s.shape()) +
                         " and " + ad::to_string(s_hat.shape()));
  }
  ad::Tensor mx = ad::mean(s, 1);
  ad::Tensor my = ad::mean(s_hat, 1);
  ad::Tensor dx = ad::sub(s, mx);
  ad::Tensor dy = ad::sub(s_hat, my);
  ad::Tensor vx = ad::mean(ad::square(dx), 1);
  ad::Tensor vy = ad::mean(ad::square(dy), 1);
  ad::Tensor cxy = ad::mean(ad::mul(dx, dy), 1);
  ad::Tensor num = ad::mul(ad::add_scalar(ad::scale(ad::mul(mx, my), 2.0), c.o1),
                           ad::add_scalar(ad::scale(cxy, 2.0), c.o2));
  ad::Tensor den = ad::mul(ad::add_scalar(ad::add(ad::square(mx), ad::square(my)), c.o1),
                           ad::add_scalar(ad::add(vx, vy), c.o2));
  return ad::add_scalar(ad::scale(ad::mean(ad::div(num, den)), -1.0), 1.0);
}

ad::Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw RangeError("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    }
    v[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return ad::Tensor::constant({labels.size(), classes}, std::move(v));
}

ad::Tensor cross_entropy(const ad::Tensor& z, const ad::Tensor& targets) {
  if (z.rank() != 2 || z.shape() != targets.shape()) {
    throw DimensionError("cross_entropy: predictions " + ad::to_string(z.shape()) + " vs targets " +
                         ad::to_string(targets.shape()));
  }
  const std::size_t n = z.dim(0), j = z.dim(1);
  auto zv = z.value();
  for (std::size_t r = 0; r < n; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < j; ++c) {
      if (zv[r * j + c] < 0.0) throw ContractError("cross_entropy: negative probability in row " + std::to_string(r));
      total += zv[r * j + c];
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ContractError("cross_entropy: row " + std::to_string(r) + " sums to " + std::to_string(total));
    }
  }
  auto tv = targets.value();
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < j; ++c) {
      const double t = tv[r * j + c];
      if (t == 1.0) {
        ++ones;
      } else if (t != 0.0) {
        ones = 2;
      }
    }
    if (ones != 1) throw ContractError("cross_entropy: target row " + std::to_string(r) + " is not one-hot");
  }
  // Picking the labelled probability first keeps log(0) off unlabelled entries.
  ad::Tensor picked = ad::sum(ad::mul(z, targets), 1);
  return ad::scale(ad::mean(ad::log(picked)), -1.0);
}

}  // namespace jscc::objectives
