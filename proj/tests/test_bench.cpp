#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "repgraph/bench.hpp"
#include "repgraph/error.hpp"

using namespace repgraph;

TEST(Bench, Quantile) {
  EXPECT_EQ(quantile({3, 1, 2}, 0.5), 2.0);
  EXPECT_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_EQ(quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_EQ(quantile({7}, 0.75), 7.0);
}

TEST(Bench, TimingContract) {
  EXPECT_THROW(time_repeated([] {}, 4, 2), Error);
  EXPECT_THROW(time_repeated([] {}, 5, 1), Error);
  int calls = 0;
  const auto t = time_repeated([&] { ++calls; }, 5, 2);
  EXPECT_EQ(calls, 7);
  EXPECT_EQ(t.samples_ms.size(), 5u);
  EXPECT_LT(t.iqr_ms, 0.05);
}

TEST(Bench, LogLogSlope) {
  EXPECT_NEAR(loglog_slope({1, 2, 4, 8}, {3, 12, 48, 192}), 2.0, 1e-12);
  EXPECT_NEAR(loglog_slope({10, 100}, {5, 50}), 1.0, 1e-12);
}

TEST(Bench, NoopRowsAndCsv) {
  BenchConfig cfg;
  cfg.blocks = {"noop", "brg"};
  cfg.geometries = {{8, 8}};
  cfg.channels = 16;
  cfg.inner = 4;
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].block, "noop");
  EXPECT_LT(rows[0].iqr_ms, 0.05);
  EXPECT_FALSE(rows[1].skipped);
  std::ostringstream os;
  write_bench_csv(os, rows);
  EXPECT_EQ(os.str().rfind("block,h,w,c,cp,s,dtype,median_ms,iqr_ms,repeats\n", 0), 0u);
  EXPECT_NE(os.str().find("brg,8,8,16,4,9,f32,"), std::string::npos);
}

TEST(Bench, OverBudgetGeometryIsSkipped) {
  BenchConfig cfg;
  cfg.blocks = {"nl"};
  cfg.geometries = {{64, 64}};
  cfg.channels = 16;
  cfg.inner = 4;
  cfg.memory_budget_mb = 1;
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].skipped);
  EXPECT_FALSE(rows[0].reason.empty());
  std::ostringstream os;
  write_bench_csv(os, rows);
  EXPECT_NE(os.str().find("# skipped"), std::string::npos);
}

TEST(Bench, UnknownBlockIsConfigError) {
  BenchConfig cfg;
  cfg.blocks = {"transformer"};
  cfg.geometries = {{4, 4}};
  try {
    (void)run_benchmark(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(Bench, NonLocalLatencyGrowsQuadratically) {
  // Small channel widths keep the N^2 attention dominant.
  BenchConfig cfg;
  cfg.blocks = {"nl"};
  cfg.geometries = {{16, 16}, {32, 32}, {64, 64}};
  cfg.channels = 8;
  cfg.inner = 8;
  cfg.dtype = "f32";
  const auto rows = run_benchmark(cfg);
  std::vector<double> n, t;
  for (const auto& r : rows) {
    ASSERT_FALSE(r.skipped);
    n.push_back(double(r.h * r.w));
    t.push_back(r.median_ms);
  }
  EXPECT_NEAR(loglog_slope(n, t), 2.0, 0.3);
}
