#include <cmath>

#include <gtest/gtest.h>

#include "sssd/metrics.hpp"

using namespace sssd;

namespace {

// Direct definitions, written independently of the library.
double oracle_gmean(long tp, long fp, long tn, long fn) {
  const double se = tp + fn ? double(tp) / (tp + fn) : 0.0;
  const double sp = tn + fp ? double(tn) / (tn + fp) : 0.0;
  return std::sqrt(se * sp);
}

double oracle_f1(long tp, long fp, long fn) {
  const double p = tp + fp ? double(tp) / (tp + fp) : 0.0;
  const double r = tp + fn ? double(tp) / (tp + fn) : 0.0;
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

double oracle_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST(Metrics, Examples) {
  EXPECT_DOUBLE_EQ(gmean({5, 0, 5, 0}), 1.0);
  EXPECT_DOUBLE_EQ(gmean({0, 1, 5, 3}), 0.0);
  EXPECT_NEAR(std::sqrt(0.9 * 0.95), gmean({9, 1, 19, 1}), 1e-12);
  EXPECT_NEAR(gmean({9, 1, 19, 1}), 0.924662, 1e-6);
  EXPECT_DOUBLE_EQ(f1({5, 0, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(f1({0, 2, 3, 1}), 0.0);
  EXPECT_NEAR(f1({3, 1, 0, 2}), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(*roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(*roc_auc({0.3, 0.3, 0.3}, {0, 1, 1}), 0.5);
  EXPECT_DOUBLE_EQ(*roc_auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  EXPECT_FALSE(roc_auc({0.1, 0.2}, {1, 1}).has_value());
  EXPECT_DOUBLE_EQ(f1({0, 0, 0, 0}), 0.0);
}

TEST(Metrics, ConfusionTablesMatchOracleExhaustively) {
  for (long n = 0; n <= 20; ++n)
    for (long tp = 0; tp <= n; ++tp)
      for (long fp = 0; tp + fp <= n; ++fp)
        for (long tn = 0; tp + fp + tn <= n; ++tn) {
          const long fn = n - tp - fp - tn;
          ConfusionCounts c{tp, fp, tn, fn};
          ASSERT_NEAR(gmean(c), oracle_gmean(tp, fp, tn, fn), 1e-12);
          ASSERT_NEAR(f1(c), oracle_f1(tp, fp, fn), 1e-12);
        }
}

TEST(Metrics, AucMatchesPairEnumeration) {
  // Scores from a small grid so ties are frequent.
  for (int len = 2; len <= 8; ++len)
    for (int mask = 1; mask < (1 << len) - 1; ++mask)
      for (int variant = 0; variant < 3; ++variant) {
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < len; ++i) {
          y.push_back((mask >> i) & 1);
          s.push_back(((i * 7 + variant * 3 + mask) % 4) / 4.0);
        }
        ASSERT_NEAR(*roc_auc(s, y), oracle_auc(s, y), 1e-12);
      }
}

TEST(Metrics, PermutationInvariance) {
  std::vector<double> s{0.9, 0.1, 0.6, 0.4, 0.7};
  std::vector<int> y{1, 0, 1, 0, 0};
  auto a = confusion(s, y, 0.5);
  std::vector<double> s2{0.7, 0.4, 0.9, 0.6, 0.1};
  std::vector<int> y2{0, 0, 1, 1, 0};
  auto b = confusion(s2, y2, 0.5);
  EXPECT_EQ(a, b);
  EXPECT_DOUBLE_EQ(*roc_auc(s, y), *roc_auc(s2, y2));
}

TEST(Metrics, ReportFlagsMissingNegatives) {
  auto r = make_report({0.9, 0.2}, {1, 1}, 0.5);
  EXPECT_FALSE(r.specificity_defined);
  EXPECT_DOUBLE_EQ(r.spec(), 0.0);
  EXPECT_FALSE(r.auc.has_value());
}
