#include "ggmm/datagen.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "ggmm/spd.hpp"
#include "oracles.hpp"

namespace {

using ggmm::Dataset;
using ggmm::GenSpec;
using ggmm::GmmParams;
using ggmm::Matrix;
using ggmm::SpdPoint;
using ggmm::Vector;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

// --- spec validation -----------------------------------------------------------

TEST(GenSpec, Validation) {
  GenSpec s;
  EXPECT_NO_THROW(s.validate());
  s.d = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.c = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.e = 0.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.n = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(GenSpec, DefaultSampleCountIsHundredDSquared) {
  GenSpec s;
  s.d = 3;
  EXPECT_EQ(s.sample_count(), 900);
  s.n = 42;
  EXPECT_EQ(s.sample_count(), 42);
}

// --- mixture generation ----------------------------------------------------------

TEST(EccentricEigenvalues, SphericalAndLadder) {
  EXPECT_TRUE(ggmm::eccentric_eigenvalues(4, 1.0).isOnes());
  const Vector lam = ggmm::eccentric_eigenvalues(5, 10.0);
  EXPECT_NEAR(lam.maxCoeff() / lam.minCoeff(), 10.0, 1e-12);
  EXPECT_NEAR(lam.sum(), 5.0, 1e-12);
}

TEST(HaarOrthogonal, ProducesOrthogonalMatrix) {
  ggmm::Xoshiro256 rng(3);
  const Matrix q = ggmm::haar_orthogonal(4, rng);
  EXPECT_LT((q.transpose() * q - Matrix::Identity(4, 4)).norm(), 1e-12);
}

TEST(GenMixture, SphericalCaseIsExactIdentity) {
  GenSpec s;
  s.d = 3;
  s.k = 2;
  s.c = 1.0;
  s.e = 1.0;
  s.seed = 5;
  const GmmParams params = ggmm::gen_mixture(s);
  for (const auto& cov : params.covs)
    EXPECT_TRUE(cov.mat() == Matrix::Identity(3, 3));
}

TEST(GenMixture, EccentricityTenWithinTolerance) {
  GenSpec s;
  s.d = 4;
  s.k = 3;
  s.c = 1.0;
  s.e = 10.0;
  s.seed = 7;
  const GmmParams params = ggmm::gen_mixture(s);
  for (const auto& cov : params.covs) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov.mat());
    const double ratio = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    EXPECT_NEAR(ratio, 10.0, 1e-10 * 10.0);
  }
}

TEST(GenMixture, TraceNormalizedToDimension) {
  GenSpec s;
  s.d = 5;
  s.k = 3;
  s.c = 0.2;
  s.e = 4.0;
  s.seed = 11;
  const GmmParams params = ggmm::gen_mixture(s);
  for (const auto& cov : params.covs) EXPECT_NEAR(cov.mat().trace(), 5.0, 1e-12 * 5.0);
}

TEST(GenMixture, SeparationCriterionHolds) {
  GenSpec s;
  s.d = 2;
  s.k = 2;
  s.c = 5.0;
  s.e = 1.0;
  s.seed = 13;
  const GmmParams params = ggmm::gen_mixture(s);
  EXPECT_GE((params.means[0] - params.means[1]).norm(), 5.0 * std::sqrt(2.0));
}

// The separation parameter only controls overlap if the realized minimum
// pairwise distance tracks the threshold instead of overshooting it. A loose
// bound silently turns every low-separation cell into an easy well-separated
// problem, which defeats the point of sweeping c.
TEST(GenMixture, SeparationBoundIsNearlyTight) {
  struct Case {
    int d, k;
    double c, e;
  };
  const Case cases[] = {{20, 2, 0.2, 1.0}, {20, 2, 1.0, 10.0}, {2, 5, 1.0, 1.0}};
  for (const auto& cs : cases) {
    for (std::uint64_t seed : {3000u, 3001u, 3002u}) {
      GenSpec s;
      s.d = cs.d;
      s.k = cs.k;
      s.c = cs.c;
      s.e = cs.e;
      s.seed = seed;
      const GmmParams params = ggmm::gen_mixture(s);
      double max_trace = 0.0;
      for (const auto& cov : params.covs)
        max_trace = std::max(max_trace, cov.mat().trace());
      const double threshold = cs.c * std::sqrt(max_trace);
      double min_dist = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < params.means.size(); ++i)
        for (std::size_t j = i + 1; j < params.means.size(); ++j)
          min_dist = std::min(min_dist, (params.means[i] - params.means[j]).norm());
      EXPECT_GE(min_dist, threshold);
      EXPECT_LE(min_dist, 3.0 * threshold)
          << "d=" << cs.d << " k=" << cs.k << " c=" << cs.c << " seed=" << seed;
    }
  }
}

TEST(GenMixture, UniformWeightsAndValidParams) {
  GenSpec s;
  s.d = 3;
  s.k = 4;
  s.c = 1.0;
  s.e = 3.0;
  s.seed = 17;
  const GmmParams params = ggmm::gen_mixture(s);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(params.weights(j), 0.25);
  EXPECT_EQ(params.num_components(), 4u);
  EXPECT_EQ(params.dim(), 3);
}

// --- sampling --------------------------------------------------------------------

TEST(SampleMixture, LawOfLargeNumbers) {
  const GmmParams params(Vector::Ones(1), {Vector::Zero(2)}, {SpdPoint::identity(2)});
  const Dataset data = ggmm::sample_mixture(params, 100000, 19);
  const auto mle = oracle::gaussian_mle(data.samples());
  EXPECT_LT(mle.mean.norm(), 0.02);
  EXPECT_LT((mle.cov - Matrix::Identity(2, 2)).norm(), 0.05);
}

TEST(SampleMixture, DegenerateWeightsUseOnlyFirstComponent) {
  Vector w(2);
  w << 1.0, 0.0;
  const GmmParams params(
      w, {Vector::Zero(2), Vector::Constant(2, 100.0)},
      {SpdPoint::identity(2), SpdPoint::identity(2)});
  std::vector<int> labels;
  const Dataset data = ggmm::sample_mixture(params, 500, 23, &labels);
  for (const int l : labels) EXPECT_EQ(l, 0);
  EXPECT_LT(data.samples().cwiseAbs().maxCoeff(), 50.0);  // nothing near component 2
}

TEST(SampleMixture, BitwiseDeterministicPerSeed) {
  GenSpec s;
  s.d = 2;
  s.k = 3;
  s.c = 2.0;
  s.e = 5.0;
  s.n = 200;
  s.seed = 29;
  const Dataset a = ggmm::generate_dataset(s);
  const Dataset b = ggmm::generate_dataset(s);
  EXPECT_TRUE(a.samples() == b.samples());
}

TEST(SampleMixture, LabelsMatchComponentGeometry) {
  Vector w(2);
  w << 0.5, 0.5;
  const GmmParams params(
      w, {Vector::Zero(2), Vector::Constant(2, 50.0)},
      {SpdPoint::identity(2), SpdPoint::identity(2)});
  std::vector<int> labels;
  const Dataset data = ggmm::sample_mixture(params, 400, 31, &labels);
  ASSERT_EQ(labels.size(), 400u);
  for (Eigen::Index i = 0; i < 400; ++i) {
    const double near0 = data.samples().row(i).norm();
    const bool from0 = labels[static_cast<std::size_t>(i)] == 0;
    EXPECT_EQ(from0, near0 < 35.0) << "sample " << i;
  }
}

TEST(SampleMixture, RejectsNonPositiveCount) {
  const GmmParams params(Vector::Ones(1), {Vector::Zero(1)}, {SpdPoint::identity(1)});
  EXPECT_THROW(ggmm::sample_mixture(params, 0, 1), std::invalid_argument);
}

// --- CSV -------------------------------------------------------------------------

TEST(Csv, TwoByTwoLiteral) {
  const auto path = temp_file("ggmm_csv_lit.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3,4\n";
  }
  const Dataset data = ggmm::load_csv(path.string());
  EXPECT_EQ(data.n(), 2);
  EXPECT_EQ(data.d(), 2);
  EXPECT_DOUBLE_EQ(data.samples()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(data.samples()(1, 1), 4.0);
  std::filesystem::remove(path);
}

TEST(Csv, HeaderRowSkipped) {
  const auto path = temp_file("ggmm_csv_head.csv");
  {
    std::ofstream out(path);
    out << "a,b\n1.5,-2\n";
  }
  const Dataset data = ggmm::load_csv(path.string());
  EXPECT_EQ(data.n(), 1);
  EXPECT_DOUBLE_EQ(data.samples()(0, 1), -2.0);
  std::filesystem::remove(path);
}

TEST(Csv, RoundTripIsExact) {
  GenSpec s;
  s.d = 5;
  s.k = 2;
  s.c = 1.0;
  s.e = 7.5;
  s.n = 100;
  s.seed = 37;
  const Dataset data = ggmm::generate_dataset(s);
  const auto path = temp_file("ggmm_csv_rt.csv");
  ggmm::save_csv(data, path.string());
  const Dataset back = ggmm::load_csv(path.string());
  ASSERT_EQ(back.n(), data.n());
  ASSERT_EQ(back.d(), data.d());
  EXPECT_EQ((back.samples() - data.samples()).cwiseAbs().maxCoeff(), 0.0);
  std::filesystem::remove(path);
}

TEST(Csv, UsesUnixLineEndings) {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  const auto path = temp_file("ggmm_csv_lf.csv");
  ggmm::save_csv(Dataset(x), path.string());
  std::ifstream in(path, std::ios::binary);
  const std::string contents((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  EXPECT_EQ(contents.find('\r'), std::string::npos);
  std::filesystem::remove(path);
}

TEST(Csv, RaggedRowNamesLocation) {
  const auto path = temp_file("ggmm_csv_rag.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3\n";
  }
  try {
    ggmm::load_csv(path.string());
    FAIL() << "expected csv_parse_error";
  } catch (const ggmm::csv_parse_error& e) {
    EXPECT_EQ(e.row(), 2);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(Csv, NonNumericCellNamesLocation) {
  const auto path = temp_file("ggmm_csv_bad.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3,oops\n";
  }
  try {
    ggmm::load_csv(path.string());
    FAIL() << "expected csv_parse_error";
  } catch (const ggmm::csv_parse_error& e) {
    EXPECT_EQ(e.row(), 2);
    EXPECT_EQ(e.col(), 2);
  }
  std::filesystem::remove(path);
}

TEST(Csv, MissingFileAndEmptyFileThrow) {
  EXPECT_THROW(ggmm::load_csv("/nonexistent/ggmm.csv"), std::runtime_error);
  const auto path = temp_file("ggmm_csv_empty.csv");
  {
    std::ofstream out(path);
    out << "a,b\n";  // header only, no data
  }
  EXPECT_THROW(ggmm::load_csv(path.string()), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(DatasetMeta, DisclosesGenerationScheme) {
  GenSpec s;
  s.d = 2;
  s.k = 3;
  s.c = 1.0;
  s.e = 2.0;
  s.seed = 41;
  const auto j = ggmm::dataset_meta_json(s);
  EXPECT_EQ(j.at("d").get<int>(), 2);
  EXPECT_EQ(j.at("n").get<long long>(), 400);
  EXPECT_EQ(j.at("spec").at("K").get<int>(), 3);
  EXPECT_NE(j.at("separation_criterion").get<std::string>().find("sqrt"),
            std::string::npos);
}

}  // namespace
