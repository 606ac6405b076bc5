#include <gtest/gtest.h>

#include "oracles.hpp"
#include "splitdp/latency.hpp"
#include "splitdp/rng.hpp"

using namespace splitdp;

namespace {

LatencyProfile random_profile(Rng& rng, std::size_t n) {
  LatencyProfile p;
  for (std::size_t i = 0; i < n; ++i) {
    p.edge_seconds.push_back(rng.uniform(0.0, 2.0));
    p.cloud_seconds.push_back(p.edge_seconds.back() * rng.uniform(0.01, 0.5));
    p.output_bits.push_back(rng.uniform(1e3, 1e7));
  }
  p.input_bits = rng.uniform(1e3, 1e7);
  p.result_bits = rng.uniform(0.0, 1e4);
  return p;
}

}  // namespace

TEST(ShannonRate, UnitSinr) {
  NetworkCondition c;
  c.bandwidth_hz = 1e6;
  EXPECT_DOUBLE_EQ(shannon_rate(c), 1e6);
}

TEST(ShannonRate, SinrThree) {
  NetworkCondition c;
  c.bandwidth_hz = 1e6;
  c.transmit_power_w = 3.0;
  EXPECT_DOUBLE_EQ(shannon_rate(c), 2e6);
}

TEST(ShannonRate, InterferenceReducesRate) {
  NetworkCondition c;
  c.bandwidth_hz = 1e6;
  c.transmit_power_w = 3.0;
  c.noise_power_w = 0.5;
  c.interference_w = 2.5;
  EXPECT_DOUBLE_EQ(shannon_rate(c), 1e6);
}

TEST(ShannonRate, RejectsZeroBandwidth) {
  NetworkCondition c;
  c.bandwidth_hz = 0.0;
  EXPECT_THROW(shannon_rate(c), RangeError);
}

TEST(ShannonRate, FromRateRoundTrips) { EXPECT_DOUBLE_EQ(shannon_rate(NetworkCondition::from_rate(1.3e6)), 1.3e6); }

TEST(TransmissionLatency, Examples) {
  EXPECT_DOUBLE_EQ(transmission_latency(1e6, 0.0, 1e6), 1.0);
  EXPECT_DOUBLE_EQ(transmission_latency(4e6, 4e6, 4e6), 2.0);
  EXPECT_DOUBLE_EQ(transmission_latency(0.0, 0.0, 1e6), 0.0);
}

TEST(TransmissionLatency, LinkDownIsDistinct) {
  EXPECT_THROW(transmission_latency(1.0, 1.0, 0.0), LinkDownError);
  try {
    transmission_latency(1.0, 1.0, -5.0);
  } catch (const Error& e) {
    EXPECT_STREQ(e.kind(), "link_down");
  }
}

TEST(ComputeLatency, Examples) {
  EXPECT_DOUBLE_EQ(compute_latency(1e9, 1e9), 1.0);
  EXPECT_DOUBLE_EQ(compute_latency(0.0, 1e9), 0.0);
  EXPECT_DOUBLE_EQ(compute_latency(7168.0, 1e6), 7.168e-3);
  EXPECT_THROW(compute_latency(1.0, 0.0), RangeError);
}

TEST(Profile, SingleFcLayer) {
  ModelGraph model(Shape{2}, {FullyConnected::make(2, 3)});
  const LatencyProfile p = profile(model, {9.0, 90.0}, 64.0, 3);
  EXPECT_DOUBLE_EQ(p.edge_seconds[0], 1.0);
  EXPECT_DOUBLE_EQ(p.cloud_seconds[0], 0.1);
  EXPECT_DOUBLE_EQ(p.input_bits, 128.0);
  EXPECT_DOUBLE_EQ(p.result_bits, 192.0);
}

TEST(Profile, FeatureMapBits) {
  ModelGraph model(Shape{1, 4, 4}, {Conv::make(1, 2, 3, 1, 1)});
  const LatencyProfile p = profile(model, {1e6, 1e9}, 64.0, 1);
  EXPECT_DOUBLE_EQ(p.output_bits[0], 2048.0);
}

TEST(Profile, RejectsBadCapabilities) {
  ModelGraph model(Shape{2}, {FullyConnected::make(2, 3)});
  EXPECT_THROW(profile(model, {0.0, 1.0}, 64.0, 3), RangeError);
}

TEST(SelectPartition, CloudOnlyWhenEdgeIsSlow) {
  LatencyProfile p;
  p.edge_seconds = {10.0};
  p.cloud_seconds = {1.0};
  p.output_bits = {1.0};
  p.input_bits = 1.0;
  p.result_bits = 0.0;
  const PartitionPlan plan = select_partition(p, 1.0);
  EXPECT_EQ(plan.split, 0u);
  EXPECT_DOUBLE_EQ(plan.total_seconds, 2.0);
  EXPECT_DOUBLE_EQ(plan.device_only_seconds, 10.0);
}

TEST(SelectPartition, FastLinkAndFastCloudOffloadsEverything) {
  Rng rng(1);
  LatencyProfile p = random_profile(rng, 6);
  for (std::size_t i = 0; i < 6; ++i) p.cloud_seconds[i] = p.edge_seconds[i] * 1e-3;
  EXPECT_EQ(select_partition(p, 1e15).split, 0u);
}

TEST(SelectPartition, DeviceOnlyUploadsNothing) {
  LatencyProfile p;
  p.edge_seconds = {1.0, 1.0};
  p.cloud_seconds = {1.0, 1.0};
  p.output_bits = {100.0, 100.0};
  p.input_bits = 100.0;
  p.result_bits = 10.0;
  const LatencyBreakdown b = split_breakdown(p, 2, 10.0);
  EXPECT_DOUBLE_EQ(b.uplink, 0.0);
  EXPECT_DOUBLE_EQ(b.downlink, 1.0);
  EXPECT_DOUBLE_EQ(b.total(), 3.0);
}

TEST(SelectPartition, TiesGoToSmallestSplit) {
  LatencyProfile p;
  p.edge_seconds = {0.0, 0.0, 5.0};
  p.cloud_seconds = {0.0, 0.0, 0.0};
  p.output_bits = {5.0, 5.0, 5.0};
  p.input_bits = 5.0;
  p.result_bits = 0.0;
  // every split costs 5 s
  for (std::size_t m = 0; m <= 3; ++m) EXPECT_EQ(split_breakdown(p, m, 1.0).total(), 5.0);
  EXPECT_EQ(select_partition(p, 1.0).split, 0u);
}

TEST(SelectPartition, MatchesBruteForceOnRandomProfiles) {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const LatencyProfile p = random_profile(rng, 1 + rng.index(12));
    const double rate = std::exp(rng.uniform(std::log(1e4), std::log(1e9)));
    const PartitionPlan plan = select_partition(p, rate);
    const auto [m, t] = oracle::best_split(p, rate);
    EXPECT_EQ(plan.split, m);
    EXPECT_EQ(plan.total_seconds, t);
    EXPECT_LE(plan.total_seconds, std::min(plan.cloud_only_seconds, plan.device_only_seconds));
  }
}

TEST(SelectPartition, LinkDownRejected) {
  Rng rng(2);
  EXPECT_THROW(select_partition(random_profile(rng, 3), 0.0), LinkDownError);
}

TEST(SelectPartition, RejectsMalformedProfile) {
  LatencyProfile p;
  EXPECT_THROW(select_partition(p, 1.0), ShapeError);
  p.edge_seconds = {1.0};
  p.cloud_seconds = {-1.0};
  p.output_bits = {1.0};
  EXPECT_THROW(select_partition(p, 1.0), RangeError);
}

TEST(Replan, ConstantTraceGivesIdenticalPlans) {
  Rng rng(3);
  const LatencyProfile p = random_profile(rng, 5);
  std::vector<TracePoint> trace;
  for (int i = 0; i < 4; ++i) trace.push_back({double(i), NetworkCondition::from_rate(2e6, i)});
  const auto plans = replan_on_bandwidth_change(p, trace);
  ASSERT_EQ(plans.size(), 4u);
  for (const auto& plan : plans) {
    EXPECT_EQ(plan.split, plans[0].split);
    EXPECT_EQ(plan.total_seconds, plans[0].total_seconds);
  }
}

TEST(Replan, SinglePointEqualsSelect) {
  Rng rng(4);
  const LatencyProfile p = random_profile(rng, 5);
  const auto plans = replan_on_bandwidth_change(p, {{0.0, NetworkCondition::from_rate(3e5)}});
  const PartitionPlan direct = select_partition(p, 3e5);
  EXPECT_EQ(plans[0].split, direct.split);
  EXPECT_EQ(plans[0].total_seconds, direct.total_seconds);
}

TEST(Replan, FasterLinkOffloadsMore) {
  // Compute-heavy net: edge is slow, feature maps shrink with depth.
  LatencyProfile p;
  p.edge_seconds = {0.01, 0.05, 0.5, 2.0};
  p.cloud_seconds = {0.0001, 0.0005, 0.005, 0.02};
  p.output_bits = {4e5, 1e5, 2e4, 640.0};
  p.input_bits = 1.5e6;
  p.result_bits = 640.0;
  const auto plans = replan_on_bandwidth_change(
      p, {{0.0, NetworkCondition::from_rate(0.15e6)}, {1.0, NetworkCondition::from_rate(15e6)}});
  EXPECT_GE(plans[0].split, plans[1].split);
  EXPECT_EQ(plans[0].split, oracle::best_split(p, 0.15e6).first);
  EXPECT_EQ(plans[1].split, oracle::best_split(p, 15e6).first);
  EXPECT_LT(plans[1].split, plans[0].split);
}

TEST(Replan, RejectsNonIncreasingTimestamps) {
  Rng rng(5);
  const LatencyProfile p = random_profile(rng, 2);
  EXPECT_THROW(replan_on_bandwidth_change(p, {{1.0, NetworkCondition::from_rate(1e6)}, {1.0, NetworkCondition::from_rate(1e6)}}),
               RangeError);
  EXPECT_THROW(replan_on_bandwidth_change(p, {}), RangeError);
}
