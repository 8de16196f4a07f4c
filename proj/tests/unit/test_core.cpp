// Copyright 2026 The DFF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "dff/core.hpp"
#include "dff/error.hpp"
#include "support/fixtures.hpp"

namespace {

using testing_support::TempDir;

TEST(Rng, SameSeedSameStream) {
  dff::Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndIndexRanges) {
  dff::Rng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    ASSERT_LT(rng.index(13), 13u);
  }
  EXPECT_NEAR(sum / 20000.0, 0.5, 0.01);
}

TEST(Rng, NormalMoments) {
  dff::Rng rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(DeriveSeed, DeterministicAndStreamSeparated) {
  EXPECT_EQ(dff::derive_seed(5, "data"), dff::derive_seed(5, "data"));
  EXPECT_NE(dff::derive_seed(5, "data"), dff::derive_seed(5, "test"));
  EXPECT_NE(dff::derive_seed(5, "data"), dff::derive_seed(6, "data"));
}

TEST(FormatDouble, RoundTripsBitExactly) {
  dff::Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.index(40)) - 20);
    const double back = dff::parse_double(dff::format_double(v));
    ASSERT_EQ(std::memcmp(&v, &back, sizeof v), 0) << dff::format_double(v);
  }
  EXPECT_EQ(dff::parse_double(dff::format_double(0.1)), 0.1);
}

TEST(ParseDouble, RejectsGarbage) {
  EXPECT_THROW(dff::parse_double("abc"), dff::DataError);
  EXPECT_THROW(dff::parse_double("1.0x"), dff::DataError);
  EXPECT_THROW(dff::parse_double(""), dff::DataError);
}

TEST(Dataset, RejectsBadShapesAndValues) {
  std::vector<dff::Sample> bad{{{1.0, 2.0}, {1.0}}, {{1.0}, {1.0}}};
  EXPECT_THROW(dff::Dataset(bad, 2, 1), dff::DataError);
  std::vector<dff::Sample> nan{{{1.0}, {std::numeric_limits<double>::quiet_NaN()}}};
  EXPECT_THROW(dff::Dataset(nan, 1, 1), dff::DataError);
  EXPECT_THROW(dff::Dataset({}, 0, 1), dff::DataError);
}

TEST(Dataset, MatricesAndSubset) {
  const auto ds = testing_support::random_dataset(10, 3, 2, 1);
  const Eigen::MatrixXd x = ds.features();
  ASSERT_EQ(x.rows(), 10);
  ASSERT_EQ(x.cols(), 3);
  EXPECT_EQ(x(4, 2), ds[4].x[2]);
  const std::vector<std::size_t> idx{1, 7};
  const auto sub = ds.subset(idx);
  ASSERT_EQ(sub.size(), 2u);
  EXPECT_EQ(sub[1].c, ds[7].c);
  const std::vector<std::size_t> oob{10};
  EXPECT_THROW(ds.subset(oob), dff::DataError);
}

TEST(SplitDataset, SizesCoverAndDeterminism) {
  const auto ds = testing_support::random_dataset(100, 2, 2, 2);
  const dff::SplitSpec spec{0.7, 0.2, 0.1, 9};
  const auto a = dff::split_dataset(ds, spec);
  const auto b = dff::split_dataset(ds, spec);
  EXPECT_EQ(a.train.size(), 70u);
  EXPECT_EQ(a.val.size(), 20u);
  EXPECT_EQ(a.test.size(), 10u);
  std::multiset<double> seen;
  for (const auto* part : {&a.train, &a.val, &a.test}) {
    for (const auto& s : part->samples()) seen.insert(s.x[0]);
  }
  std::multiset<double> all;
  for (const auto& s : ds.samples()) all.insert(s.x[0]);
  EXPECT_EQ(seen, all);
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val[i].x, b.val[i].x);
}

TEST(SplitDataset, RejectsBadFractions) {
  const auto ds = testing_support::random_dataset(10, 1, 1, 2);
  EXPECT_THROW(dff::split_dataset(ds, {0.5, 0.2, 0.2, 0}), dff::UsageError);
  EXPECT_THROW(dff::split_dataset(ds, {1.2, -0.2, 0.0, 0}), dff::UsageError);
  const auto tiny = testing_support::random_dataset(2, 1, 1, 2);
  EXPECT_THROW(dff::split_dataset(tiny, {0.8, 0.2, 0.0, 0}), dff::DataError);
}

TEST(KFold, PartitionsEverySampleOnce) {
  const auto folds = dff::kfold_partition(23, 4, 5);
  ASSERT_EQ(folds.size(), 4u);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    EXPECT_GE(f.size(), 5u);
    EXPECT_LE(f.size(), 6u);
    for (auto i : f) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), 23u);
  EXPECT_THROW(dff::kfold_partition(3, 4, 0), dff::DataError);
  EXPECT_THROW(dff::kfold_partition(3, 1, 0), dff::UsageError);
}

TEST(DatasetCsv, RoundTripIsExact) {
  TempDir tmp;
  const auto ds = testing_support::random_dataset(17, 3, 4, 8);
  dff::write_dataset_csv(tmp / "d.csv", ds);
  EXPECT_TRUE(std::filesystem::exists(dff::meta_path_for(tmp / "d.csv")));
  const auto back = dff::read_dataset_csv(tmp / "d.csv");
  ASSERT_EQ(back.size(), ds.size());
  ASSERT_EQ(back.p(), 3u);
  ASSERT_EQ(back.d(), 4u);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].x, ds[i].x);
    EXPECT_EQ(back[i].c, ds[i].c);
  }
}

TEST(DatasetCsv, ReportsErrors) {
  TempDir tmp;
  EXPECT_THROW(dff::read_dataset_csv(tmp / "missing.csv"), dff::IoError);
  {
    std::ofstream(tmp / "bad.csv") << "x_0,y_0\n1,2\n";
  }
  EXPECT_THROW(dff::read_dataset_csv(tmp / "bad.csv"), dff::DataError);
  {
    std::ofstream(tmp / "short.csv") << "x_0,c_0\n1\n";
  }
  EXPECT_THROW(dff::read_dataset_csv(tmp / "short.csv"), dff::DataError);
  {
    std::ofstream(tmp / "nan.csv") << "x_0,c_0\n1,zz\n";
  }
  EXPECT_THROW(dff::read_dataset_csv(tmp / "nan.csv"), dff::DataError);
}

TEST(VectorOps, DotNormFinite) {
  const std::vector<double> a{3.0, 4.0}, b{1.0, -1.0};
  EXPECT_EQ(dff::dot(a, b), -1.0);
  EXPECT_EQ(dff::norm2(a), 5.0);
  EXPECT_TRUE(dff::all_finite(a));
  const std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
  EXPECT_FALSE(dff::all_finite(bad));
}

}  // namespace
