#include <gtest/gtest.h>

#include "obidos/bench.hpp"
#include "obidos/error.hpp"
#include "support.hpp"

using namespace obidos;
using namespace obidos::testing;

TEST(BenchRow, CsvRoundTrip) {
  BenchRow row{"vary-interest", "hybrid", 75, 1234, 56789, 42, 3.5, 2};
  const auto line = row.csv();
  EXPECT_EQ(line, "vary-interest,hybrid,75,1234,56789,42,3.500,2");
  auto back = BenchRow::parse(line);
  EXPECT_EQ(back.csv(), line);
  EXPECT_THROW(BenchRow::parse("vary-interest,hybrid,75"), DeserializeError);
  EXPECT_THROW(BenchRow::parse("a,b,x,1,2,3,4,5"), DeserializeError);
}

TEST(BenchRow, HeaderIsFixed) {
  EXPECT_EQ(kBenchHeader, "experiment,mode,param,metadata_bytes,blob_bytes,requests,elapsed_ms,run");
}

TEST(Bench, CorpusShapes) {
  EXPECT_EQ(volume_corpus(64, 1024).counts, (std::vector<std::size_t>{4, 4, 4, 2, 2}));
  EXPECT_EQ(interest_corpus(1024).counts, (std::vector<std::size_t>{4, 4, 8, 2, 2}));
}

TEST(Bench, UnknownExperiment) {
  TempDir dir;
  BenchConfig c;
  c.work_dir = dir.path();
  EXPECT_THROW(run_bench("no-such-thing", c), Error);
}

TEST(Bench, VolumeRowsPerModeAndParam) {
  TempDir dir;
  BenchConfig c;
  c.work_dir = dir.path();
  c.image_size_bytes = 512;
  c.params = {16, 32};
  c.runs = 2;
  std::size_t streamed = 0;
  auto rows = run_bench("vary-total-volume", c, [&](const BenchRow&) { ++streamed; });
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(streamed, rows.size());
  for (const auto& r : rows) {
    EXPECT_EQ(r.requests, r.stats.requests());
    EXPECT_EQ(r.metadata_bytes, r.stats.metadata_bytes);
    EXPECT_EQ(BenchRow::parse(r.csv()).csv(), r.csv());
  }
  // Cached corpora are reused by later runs.
  auto again = run_bench("vary-total-volume", c);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(again[i].stats, rows[i].stats);
}

TEST(Bench, RemoteLoadAddsLatencyNotTraffic) {
  TempDir dir;
  BenchConfig c;
  c.work_dir = dir.path();
  c.image_size_bytes = 512;
  c.params = {16};
  c.remote = RemoteProfile{std::chrono::microseconds(200), std::chrono::nanoseconds(1)};
  auto remote = run_bench("remote-load", c);
  auto local = run_bench("vary-total-volume", c);
  ASSERT_EQ(remote.size(), local.size());
  for (std::size_t i = 0; i < remote.size(); ++i) {
    EXPECT_EQ(remote[i].stats, local[i].stats);
    EXPECT_GE(remote[i].elapsed_ms, remote[i].requests * 0.2);
  }
}
