// Copyright 2026 The vmdeflate Authors
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


#include "support.hpp"

#include <gtest/gtest.h>

using namespace vmdeflate;

namespace {

VmRecord vm(std::string id, Seconds arrival, Seconds departure, Units cpu, Units mem, std::vector<double> utils,
            WorkloadClass cls = WorkloadClass::interactive, Seconds interval = 300)
{
    VmRecord r;
    r.id = std::move(id);
    r.arrival = arrival;
    r.departure = departure;
    r.max = {cpu, mem};
    r.workload_class = cls;
    for (std::size_t k = 0; k < utils.size(); ++k)
    {
        r.util_series.push_back({arrival + static_cast<Seconds>(k) * interval, utils[k]});
    }
    return r;
}

Trace trace_of(std::vector<VmRecord> records, const ScenarioConfig& config)
{
    Trace t;
    t.records = std::move(records);
    t.meta.vm_count = t.records.size();
    prepare_records(t.records, config);
    return t;
}

ScenarioConfig small_config(std::size_t servers, Units cpu, Units mem)
{
    ScenarioConfig c;
    c.servers = servers;
    c.server_capacity = {cpu, mem};
    return c;
}

TEST(Engine, LoneVmSeesNoPressure)
{
    auto cfg = small_config(1, 8000, 16384);
    const auto t = trace_of({vm("a", 0, 3600, 4000, 4096, std::vector<double>(12, 0.5))}, cfg);
    const auto r = run(cfg, t);
    EXPECT_EQ(r.pressure_events, 0u);
    EXPECT_EQ(r.failure_count, 0u);
    EXPECT_DOUBLE_EQ(r.throughput_loss, 0.0);
    EXPECT_DOUBLE_EQ(r.overcommitment, 0.5);
    ASSERT_EQ(r.vms.size(), 1u);
    EXPECT_EQ(r.vms[0].status, VmStatus::completed);
    EXPECT_EQ(r.reference_servers, 1u);
    EXPECT_DOUBLE_EQ(r.cluster_overcommitment, 0.0);
}

TEST(Engine, TwoVmScenarioSplitsProportionally)
{
    const auto r = run(load_scenario(vmdeflate::testing::data_dir() / "two_vm/scenario.conf"));
    EXPECT_EQ(r.failure_count, 0u);
    EXPECT_EQ(r.pressure_events, 1u);
    EXPECT_DOUBLE_EQ(r.overcommitment, 1.5);
    EXPECT_EQ(r.reference_servers, 2u);
    ASSERT_EQ(r.vms.size(), 2u);
    for (const auto& o : r.vms)
    {
        EXPECT_EQ(o.status, VmStatus::completed);
        bool squeezed = false;
        for (const auto& s : o.timeline) squeezed = squeezed || s.cpu == 4000;
        EXPECT_TRUE(squeezed) << o.id;
    }
    // vm-a alone until 600, then both at 4000 mcores
    EXPECT_EQ(r.vms[0].timeline.front().cpu, 6000);
}

TEST(Engine, TwoVmScenarioPreemptionFails)
{
    const auto r = run(load_scenario(vmdeflate::testing::data_dir() / "two_vm/scenario_preemption.conf"));
    EXPECT_EQ(r.failure_count, 1u);
    EXPECT_DOUBLE_EQ(r.failure_probability, 0.5);
}

TEST(Throughput, LossExamples)
{
    const auto v = vm("a", 0, 1200, 1000, 0, {0.2, 0.4, 0.6, 0.8});
    const std::vector<AllocationStep> half{{0, 500, 0}};
    EXPECT_NEAR(throughput_loss(v, half, 0, 1200, 300), 0.2, 1e-12);
    const std::vector<AllocationStep> full{{0, 1000, 0}};
    EXPECT_DOUBLE_EQ(throughput_loss(v, full, 0, 1200, 300), 0.0);
    const std::vector<AllocationStep> none{{0, 0, 0}};
    EXPECT_DOUBLE_EQ(throughput_loss(v, none, 0, 1200, 300), 1.0);
}

TEST(Throughput, StepChangesMidInterval)
{
    const auto v = vm("a", 0, 600, 1000, 0, {1.0, 1.0});
    // 1000 until 150, then 0: loses 450 of 600 seconds of demand
    const std::vector<AllocationStep> steps{{0, 1000, 0}, {150, 0, 0}};
    EXPECT_NEAR(throughput_loss(v, steps, 0, 600, 300), 0.75, 1e-12);
    const auto totals = integrate_underallocation(v, steps, 0, 600, 300);
    EXPECT_NEAR(totals.alloc_fraction_s, 150.0, 1e-9);
}

TEST(Revenue, Examples)
{
    VmOutcome o;
    o.deflatable = true;
    o.priority = 0.5;
    o.max = {4000, 0};
    o.status = VmStatus::completed;
    o.start = 0;
    o.end = 7200;
    o.alloc_fraction_s = 3600;  // half allocation for two hours
    PricingConfig p;
    EXPECT_DOUBLE_EQ(bill(o, p), 0.2 * 4 * 2);
    p.scheme = Pricing::priority_linear;
    EXPECT_DOUBLE_EQ(bill(o, p), 0.5 * 4 * 2);
    p.scheme = Pricing::allocation_linear;
    o.alloc_fraction_s = 7200;
    const double full = bill(o, p);
    o.alloc_fraction_s = 3600;
    EXPECT_DOUBLE_EQ(bill(o, p), full / 2);
    o.deflatable = false;
    EXPECT_DOUBLE_EQ(bill(o, p), 4 * 2);
    o.status = VmStatus::rejected;
    EXPECT_DOUBLE_EQ(bill(o, p), 0.0);
}

TEST(Engine, SameSeedSameBytes)
{
    auto cfg = load_scenario(vmdeflate::testing::data_dir() / "synthetic/scenario.conf");
    cfg.servers = 14;
    const auto a = serialize(run(cfg));
    const auto b = serialize(run(cfg));
    EXPECT_EQ(a, b);
}

TEST(Engine, InvariantsHoldAcrossPolicies)
{
    auto base = load_scenario(vmdeflate::testing::data_dir() / "synthetic/scenario.conf");
    const Trace t = prepare_trace(base);
    for (auto kind : {PolicyKind::proportional, PolicyKind::min_aware, PolicyKind::priority,
                      PolicyKind::priority_min_aware, PolicyKind::deterministic})
    {
        for (bool partitioned : {false, true})
        {
            auto cfg = base;
            cfg.policy = kind;
            cfg.partitioned = partitioned;
            cfg.servers = 13;
            cfg.check_invariants = true;
            cfg.unplug_success = 0.7;
            cfg.reference_servers = 25;
            EXPECT_NO_THROW(run(cfg, t)) << to_string(kind) << " partitioned=" << partitioned;
        }
    }
}

TEST(Engine, SweepMatchesSingleRun)
{
    auto cfg = load_scenario(vmdeflate::testing::data_dir() / "two_vm/scenario.conf");
    const Trace t = prepare_trace(cfg);
    const std::vector<std::size_t> counts{1};
    const auto reports = sweep_overcommitment(cfg, t, counts, 4);
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(serialize(reports[0]), serialize(run(cfg, t)));
}

TEST(Engine, MinimalClusterIsClean)
{
    auto cfg = load_scenario(vmdeflate::testing::data_dir() / "synthetic/scenario.conf");
    const Trace t = prepare_trace(cfg);
    const auto n = minimal_cluster_size(cfg, t);
    cfg.servers = n;
    const auto at_n = preemption_baseline(cfg, t);
    EXPECT_EQ(at_n.failure_count, 0u);
    EXPECT_EQ(at_n.rejected_on_demand, 0u);
    cfg.servers = n - 1;
    const auto below = preemption_baseline(cfg, t);
    EXPECT_GT(below.failure_count + below.rejected_on_demand, 0u);
}

TEST(Engine, OversizedVmIsInfeasible)
{
    auto cfg = small_config(2, 4000, 4096);
    const auto t = trace_of({vm("big", 0, 600, 8000, 1024, {0.5, 0.5})}, cfg);
    EXPECT_THROW(run(cfg, t), InfeasibleConfig);
}

TEST(Engine, OnDemandVmsAreNeverDeflated)
{
    auto cfg = small_config(1, 8000, 16384);
    const auto t = trace_of({vm("od", 0, 1200, 4000, 4096, {0.9, 0.9, 0.9, 0.9}, WorkloadClass::delay_insensitive),
                             vm("d1", 300, 1200, 4000, 4096, {0.5, 0.5, 0.5}),
                             vm("d2", 600, 1200, 2000, 4096, {0.5, 0.5})},
                            cfg);
    const auto r = run(cfg, t);
    ASSERT_EQ(r.vms.size(), 3u);
    for (const auto& s : r.vms[0].timeline) EXPECT_EQ(s.cpu, 4000);
    EXPECT_GT(r.pressure_events, 0u);
}

TEST(Engine, BadScenarioValues)
{
    auto cfg = small_config(1, 8000, 16384);
    const auto t = trace_of({vm("a", 0, 600, 4000, 4096, {0.5, 0.5})}, cfg);
    auto bad = cfg;
    bad.unplug_success = 2.0;
    EXPECT_THROW(run(bad, t), InputError);
    bad = cfg;
    bad.pricing.static_rate = 0.0;
    EXPECT_THROW(run(bad, t), InputError);
}

} // namespace
