#include "tumorctl/field_io.hpp"
#include "tumorctl/grid.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace tumorctl;

namespace {

Field random_field(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Field f(g);
  for (auto& v : f.values) v = nd(rng);
  return f;
}

Eigen::MatrixXd dense_laplacian(const Grid& g) {
  Eigen::MatrixXd m(g.size(), g.size());
  for (int j = 0; j < g.size(); ++j) m.col(j) = laplacian(g, Vector::Unit(g.size(), j));
  return m;
}

}  // namespace

TEST(Grid, GeometryAndValidation) {
  const Grid g = Grid::rectangle(8, 4, 2.0, 0.5);
  EXPECT_EQ(g.size(), 32);
  EXPECT_DOUBLE_EQ(g.spacing(0), 0.25);
  EXPECT_DOUBLE_EQ(g.spacing(1), 0.125);
  EXPECT_DOUBLE_EQ(g.measure(), 1.0);
  EXPECT_DOUBLE_EQ(g.cell_volume() * g.size(), g.measure());
  EXPECT_THROW(Grid::line(3), std::invalid_argument);
  EXPECT_THROW(Grid::rectangle(8, 2), std::invalid_argument);
  EXPECT_THROW(Grid::line(8, -1.0), std::invalid_argument);
}

TEST(Laplacian, ConstantsAreInKernel) {
  for (const Grid& g : {Grid::line(16, 3.0), Grid::rectangle(6, 9, 1.0, 2.0)}) {
    const Field c(g, 2.75);
    EXPECT_LE(laplacian_neumann(c).values.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Laplacian, CosineIsDiscreteEigenfunction) {
  const double L = 2.0;
  const Grid g = Grid::line(16, L);
  const double dx = g.spacing(0);
  const Field f = Field::sample(g, [&](double x, double) { return std::cos(std::numbers::pi * x / L); });
  const double lambda = (2.0 * std::cos(std::numbers::pi * dx / L) - 2.0) / (dx * dx);
  const Vector lf = laplacian_neumann(f).values;
  EXPECT_LE((lf - lambda * f.values).cwiseAbs().maxCoeff(), 1e-11 * std::abs(lambda));
}

TEST(Laplacian, SpectrumMatchesDirectEigensolve) {
  // Mirror-closed 1D stencil: eigenvalues (2 cos(k pi dx / L) - 2) / dx^2, k = 0..N-1.
  const Grid g = Grid::line(16, 1.0);
  const double dx = g.spacing(0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_laplacian(g));
  std::vector<double> expected;
  for (int k = 0; k < 16; ++k) expected.push_back((2.0 * std::cos(k * std::numbers::pi * dx) - 2.0) / (dx * dx));
  std::sort(expected.begin(), expected.end());
  for (int k = 0; k < 16; ++k) EXPECT_NEAR(es.eigenvalues()[k], expected[k], 1e-9 * std::abs(expected.front()));
}

TEST(Laplacian, LinearSymmetricNegativeSemidefinite) {
  std::mt19937_64 rng(11);
  for (const Grid& g : {Grid::line(33, 1.3), Grid::rectangle(7, 12, 1.0, 0.4)}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Field f = random_field(g, rng), h = random_field(g, rng);
      const double a = 1.7, b = -0.3;
      const Vector combo = laplacian(g, a * f.values + b * h.values);
      EXPECT_LE((combo - a * laplacian(g, f.values) - b * laplacian(g, h.values)).cwiseAbs().maxCoeff(),
                1e-12 * combo.cwiseAbs().maxCoeff());
      const double lfh = inner(laplacian_neumann(f), h), flh = inner(f, laplacian_neumann(h));
      EXPECT_LE(std::abs(lfh - flh), 1e-12 * std::max(std::abs(lfh), 1.0));
      EXPECT_LE(inner(laplacian_neumann(f), f), 0.0);
      EXPECT_LE(std::abs(laplacian(g, f.values).sum()), 1e-12 * g.size() * laplacian(g, f.values).cwiseAbs().maxCoeff());
    }
  }
}

TEST(Laplacian, GridMismatchRejected) {
  const Grid a = Grid::line(8), b = Grid::line(10);
  EXPECT_THROW(laplacian_neumann(a, Field(b)), std::invalid_argument);
  EXPECT_THROW(inner(Field(a), Field(b)), std::invalid_argument);
}

TEST(Inner, Examples) {
  const Grid g = Grid::line(20);
  EXPECT_NEAR(inner(Field(g, 1.0), Field(g, 1.0)), 1.0, 1e-14);
  EXPECT_EQ(inner(Field(g, 1.0), Field(g, 0.0)), 0.0);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Field f = random_field(g, rng), h = random_field(g, rng);
    EXPECT_LE(std::pow(inner(f, h), 2), inner(f, f) * inner(h, h) * (1 + 1e-14));
    EXPECT_DOUBLE_EQ(inner(f, h), inner(h, f));
    EXPECT_GT(inner(f, f), 0.0);
  }
}

TEST(H1Norm, Examples) {
  const Grid g = Grid::line(64);
  EXPECT_EQ(h1_norm(Field(g)), 0.0);
  const Grid g2 = Grid::rectangle(8, 8, 2.0, 1.5);
  EXPECT_NEAR(h1_norm(Field(g2, -1.5)), 1.5 * std::sqrt(3.0), 1e-13);
  const Field x = Field::sample(g, [](double x, double) { return x; });
  EXPECT_NEAR(h1_norm(x), std::sqrt(4.0 / 3.0), 0.02 * std::sqrt(4.0 / 3.0));
}

TEST(ImplicitOperator, SolvesAgainstApply) {
  std::mt19937_64 rng(3);
  for (const Grid& g : {Grid::line(40), Grid::rectangle(20, 15), Grid::rectangle(120, 100)}) {
    const Field rhs = random_field(g, rng);
    Vector extra = Vector::Constant(g.size(), 0.3);
    const ImplicitOperator op(g, 10.0, 0.7, &extra);
    const Vector x = op.solve(rhs.values);
    EXPECT_LE((op.apply(x) - rhs.values).norm(), 1e-9 * rhs.values.norm()) << "cells " << g.size();
  }
}

TEST(TimeGrid, Basics) {
  const TimeGrid tg{2.0, 8};
  EXPECT_DOUBLE_EQ(tg.dt(), 0.25);
  EXPECT_DOUBLE_EQ(tg.time(8), 2.0);
  EXPECT_THROW((TimeGrid{0.0, 4}).validate(), std::invalid_argument);
  EXPECT_THROW((TimeGrid{1.0, 0}).validate(), std::invalid_argument);
}

TEST(SpaceTime, FlattenRoundTrip) {
  const Grid g = Grid::line(5);
  std::mt19937_64 rng(1);
  SpaceTimeField s{random_field(g, rng), random_field(g, rng), random_field(g, rng)};
  const auto back = unflatten(g, flatten(s), 3);
  for (int n = 0; n < 3; ++n) EXPECT_EQ(back[n].values, s[n].values);
}

TEST(FieldIO, RoundTripAndLayout) {
  const Grid g = Grid::rectangle(5, 4, 1.0, 2.0);
  std::mt19937_64 rng(9);
  const Field f = random_field(g, rng);
  const auto buf = encode_field(f);
  ASSERT_EQ(buf.size(), 4u + 4u * 3u + 8u * 20u);
  EXPECT_EQ(std::string(buf.data(), 4), "FLD1");
  EXPECT_EQ(static_cast<unsigned char>(buf[4]), 2u);  // little-endian dim
  EXPECT_EQ(static_cast<unsigned char>(buf[8]), 5u);
  EXPECT_EQ(static_cast<unsigned char>(buf[12]), 4u);
  EXPECT_EQ(decode_field(buf, g).values, f.values);

  const auto path = std::filesystem::temp_directory_path() / "tumorctl_roundtrip.fld";
  write_field(path.string(), f);
  EXPECT_EQ(read_field(path.string(), g).values, f.values);
  std::filesystem::remove(path);
}

TEST(FieldIO, RejectsMalformedInput) {
  const Grid g = Grid::line(6);
  auto buf = encode_field(Field(g, 1.0));
  EXPECT_THROW(decode_field(buf, Grid::line(7)), std::runtime_error);
  EXPECT_THROW(decode_field(buf, Grid::rectangle(6, 6)), std::runtime_error);
  auto truncated = buf;
  truncated.pop_back();
  EXPECT_THROW(decode_field(truncated, g), std::runtime_error);
  auto trailing = buf;
  trailing.push_back(0);
  EXPECT_THROW(decode_field(trailing, g), std::runtime_error);
  buf[0] = 'X';
  EXPECT_THROW(decode_field(buf, g), std::runtime_error);
}
