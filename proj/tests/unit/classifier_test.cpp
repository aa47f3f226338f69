#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "jscc/classifier.hpp"
#include "jscc/error.hpp"
#include "jscc/metrics.hpp"

using namespace jscc;
using classifier::ClassSubspace;
using classifier::SubspaceModel;

namespace {

SubspaceModel axes() {
  SubspaceModel m;
  m.classes.push_back({Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 0)});
  m.classes.push_back({Eigen::Vector2d::Zero(), Eigen::Vector2d(0, 1)});
  return m;
}

Eigen::MatrixXd random_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
}

}  // namespace

TEST(Classify, HandExample) {
  const auto m = axes();
  const Eigen::Vector2d y(0.9, 0.1);
  EXPECT_NEAR(classifier::residual(m.classes[0], y), 0.01, 1e-15);
  EXPECT_NEAR(classifier::residual(m.classes[1], y), 0.81, 1e-15);
  EXPECT_EQ(classifier::classify(m, y), 0);
}

TEST(Classify, ZeroResidualWinsAndTiesGoLow) {
  const auto m = axes();
  EXPECT_EQ(classifier::classify(m, Eigen::Vector2d(0.0, 3.0)), 1);
  EXPECT_EQ(classifier::classify(m, Eigen::Vector2d(1.0, 1.0)), 0);
  EXPECT_THROW(classifier::classify(m, Eigen::Vector3d(1, 1, 1)), DimensionError);
  EXPECT_THROW(classifier::classify(SubspaceModel{}, Eigen::Vector2d(1, 1)), DependencyError);
}

TEST(Fit, ConstantClassIsPureMean) {
  Eigen::MatrixXd f(3, 2);
  f << 1, 2, 1, 2, 1, 2;
  auto m = classifier::fit_subspaces(f, std::vector<int>{0, 0, 0}, 1);
  EXPECT_TRUE(m.classes[0].mean.isApprox(Eigen::Vector2d(1, 2)));
  EXPECT_EQ(m.classes[0].basis.cols(), 0);
}

TEST(Fit, LineThroughMeanHasZeroResidual) {
  Eigen::MatrixXd f(5, 3);
  const Eigen::RowVector3d mean(1, -1, 2), dir(0.6, 0.8, 0);
  for (int i = 0; i < 5; ++i) f.row(i) = mean + (i - 2.0) * dir;
  auto m = classifier::fit_subspaces(f, std::vector<int>(5, 0), 1);
  ASSERT_EQ(m.classes[0].basis.cols(), 1);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(classifier::residual(m.classes[0], f.row(i).transpose()), 0.0, 1e-12);
}

TEST(Fit, BasesAreOrthonormalAndResidualIdentityHolds) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd f(90, 12);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  std::vector<int> labels(90);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  auto m = classifier::fit_subspaces(f, labels, 3);
  for (const auto& c : m.classes) {
    EXPECT_LE(c.basis.cols(), 10);
    EXPECT_TRUE((c.basis.transpose() * c.basis).isApprox(Eigen::MatrixXd::Identity(c.basis.cols(), c.basis.cols()), 1e-8));
    Eigen::VectorXd u = f.row(0).transpose() - c.mean;
    Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(12, 12) - c.basis * c.basis.transpose();
    EXPECT_NEAR((proj * u).squaredNorm(), classifier::residual(c, f.row(0).transpose()), 1e-8);
  }
  classifier::SubspacePolicy energy{classifier::SubspacePolicy::Kind::energy, 10, 0.5};
  auto e = classifier::fit_subspaces(f, labels, 3, energy);
  for (const auto& c : e.classes) EXPECT_GE(c.basis.cols(), 1);
}

TEST(Fit, RotationInvariantPredictions) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Eigen::MatrixXd f(60, 6);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  classifier::SubspacePolicy pol{classifier::SubspacePolicy::Kind::fixed, 2, 0.9};
  const Eigen::MatrixXd q = random_orthogonal(6, rng);
  auto m = classifier::fit_subspaces(f, labels, 2, pol);
  auto mq = classifier::fit_subspaces(f * q.transpose(), labels, 2, pol);
  EXPECT_EQ(classifier::classify_rows(m, f), classifier::classify_rows(mq, f * q.transpose()));
}

TEST(Fit, Errors) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(classifier::fit_subspaces(f, std::vector<int>{0, 0}, 2), FitError);
  EXPECT_THROW(classifier::fit_subspaces(f, std::vector<int>{0, 3}, 2), RangeError);
  EXPECT_THROW(classifier::fit_subspaces(f, std::vector<int>{0}, 1), DimensionError);
}

TEST(Accuracy, Examples) {
  std::vector<int> truth = {0, 1, 2, 1};
  EXPECT_EQ(metrics::accuracy(truth, truth), 1.0);
  EXPECT_EQ(metrics::accuracy(std::vector<int>{1, 0, 0, 0}, truth), 0.0);
  EXPECT_EQ(metrics::accuracy(std::vector<int>{0, 1, 2, 2}, truth), 0.75);
  EXPECT_THROW(metrics::accuracy(std::vector<int>{0}, truth), DimensionError);
}
