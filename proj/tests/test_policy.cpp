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

#include <random>

using namespace vmdeflate;
using vmdeflate::testing::cpu_vm;
using vmdeflate::testing::random_candidates;

namespace {

std::vector<Units> cpu_amounts(const DeflationPlan& p)
{
    std::vector<Units> out;
    for (const auto& e : p.per_vm) out.push_back(e.amount.cpu);
    return out;
}

ResourceVector cpu(Units v) { return {v, 0, 0, 0}; }

TEST(Proportional, SplitsByMaximumSize)
{
    const std::vector vms{cpu_vm("a", 8000), cpu_vm("b", 4000), cpu_vm("c", 4000)};
    const auto p = deflate_proportional(vms, cpu(4000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2000, 1000, 1000}));
    EXPECT_DOUBLE_EQ(p.alpha[0], 0.75);
    EXPECT_EQ(p.at("a"), cpu(2000));
}

TEST(Proportional, ZeroDemandTakesNothing)
{
    const std::vector vms{cpu_vm("a", 8000), cpu_vm("b", 3000)};
    const auto p = deflate_proportional(vms, cpu(0));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{0, 0}));
    EXPECT_DOUBLE_EQ(p.alpha[0], 1.0);
}

TEST(Proportional, FullReclaimOfSingleVm)
{
    const std::vector vms{cpu_vm("a", 6000)};
    const auto p = deflate_proportional(vms, cpu(6000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(p.at("a"), cpu(6000));
    EXPECT_DOUBLE_EQ(p.alpha[0], 0.0);
}

TEST(Proportional, EmptyListIsInfeasibleNotAnError)
{
    const auto p = deflate_proportional({}, cpu(10));
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.shortfall, cpu(10));
    EXPECT_TRUE(deflate_proportional({}, cpu(0)).feasible);
}

TEST(Proportional, CappedAtCurrentAllocation)
{
    // b already holds only 1000, a has to cover the rest
    const std::vector vms{cpu_vm("a", 4000), cpu_vm("b", 4000, 1000)};
    const auto p = deflate_proportional(vms, cpu(4000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{3000, 1000}));
}

TEST(Proportional, BeyondCurrentAllocationIsInfeasible)
{
    const std::vector vms{cpu_vm("a", 4000, 3000), cpu_vm("b", 4000, 1000)};
    const auto p = deflate_proportional(vms, cpu(5000));
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.shortfall, cpu(1000));
    // maximum effort: everything that could be taken
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{3000, 1000}));
}

TEST(Proportional, RejectsCurrentAboveMax)
{
    const std::vector vms{cpu_vm("a", 4000, 5000)};
    EXPECT_THROW(deflate_proportional(vms, cpu(1)), std::invalid_argument);
}

TEST(MinAware, SplitsByHeadroom)
{
    const std::vector vms{cpu_vm("a", 8000, -1, 0.5, 4000), cpu_vm("b", 4000, -1, 0.5, 2000)};
    const auto p = deflate_min_aware(vms, cpu(3000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2000, 1000}));
    EXPECT_DOUBLE_EQ(p.alpha[0], 0.5);
}

TEST(MinAware, FullHeadroomPinsAtMinimum)
{
    const std::vector vms{cpu_vm("a", 8000, -1, 0.5, 4000), cpu_vm("b", 4000, -1, 0.5, 2000)};
    const auto p = deflate_min_aware(vms, cpu(6000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{4000, 2000}));
    EXPECT_DOUBLE_EQ(p.alpha[0], 0.0);
}

TEST(MinAware, MoreThanHeadroomIsInfeasible)
{
    const std::vector vms{cpu_vm("a", 8000, -1, 0.5, 4000), cpu_vm("b", 4000, -1, 0.5, 2000)};
    const auto p = deflate_min_aware(vms, cpu(6500));
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.shortfall, cpu(500));
}

TEST(MinAware, RejectsMinimumAboveMaximum)
{
    const std::vector vms{cpu_vm("a", 4000, -1, 0.5, 5000)};
    EXPECT_THROW(deflate_min_aware(vms, cpu(1)), std::invalid_argument);
}

TEST(Priority, LowerPriorityGivesMore)
{
    const std::vector vms{cpu_vm("a", 10000, -1, 0.8), cpu_vm("b", 10000, -1, 0.4)};
    const auto p = deflate_priority(vms, cpu(10000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{3333, 6667}));
    EXPECT_NEAR(p.alpha[0], 10.0 / 12.0, 1e-12);
}

TEST(Priority, NegativeShareIsClampedAndResolved)
{
    const std::vector vms{cpu_vm("a", 10000, -1, 0.8), cpu_vm("b", 10000, -1, 0.4)};
    const auto p = deflate_priority(vms, cpu(4000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{0, 4000}));
}

TEST(Priority, UniformPriorityMatchesProportional)
{
    const std::vector vms{cpu_vm("a", 7000, -1, 0.3), cpu_vm("b", 3000, -1, 0.3), cpu_vm("c", 5000, -1, 0.3)};
    const auto p = deflate_priority(vms, cpu(4321));
    const auto q = deflate_proportional(vms, cpu(4321));
    EXPECT_EQ(cpu_amounts(p), cpu_amounts(q));
}

TEST(Priority, RejectsPriorityOutsideOpenInterval)
{
    EXPECT_THROW(deflate_priority(std::vector{cpu_vm("a", 10, -1, 0.0)}, cpu(1)), std::invalid_argument);
    EXPECT_THROW(deflate_priority(std::vector{cpu_vm("a", 10, -1, 1.0)}, cpu(1)), std::invalid_argument);
    EXPECT_THROW(deflate_priority(std::vector{cpu_vm("a", 10, -1, 1e-9)}, cpu(1)), std::invalid_argument);
}

TEST(PriorityMinAware, EqualPrioritiesSplitEvenly)
{
    const std::vector vms{cpu_vm("a", 10000, -1, 0.5), cpu_vm("b", 10000, -1, 0.5)};
    const auto p = deflate_priority_min_aware(vms, cpu(5000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2500, 2500}));
    EXPECT_NEAR(p.alpha[0], 1.0, 1e-12);
}

TEST(PriorityMinAware, FullHeadroomLandsOnFloor)
{
    const std::vector vms{cpu_vm("a", 10000, -1, 0.5), cpu_vm("b", 10000, -1, 0.25)};
    const auto p = deflate_priority_min_aware(vms, cpu(5000 + 7500));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{5000, 7500}));
    EXPECT_NEAR(p.alpha[0], 0.0, 1e-12);
}

TEST(PriorityMinAware, BeyondHeadroomIsInfeasible)
{
    const std::vector vms{cpu_vm("a", 10000, -1, 0.5), cpu_vm("b", 10000, -1, 0.5)};
    const auto p = deflate_priority_min_aware(vms, cpu(10001));
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.shortfall, cpu(1));
}

std::vector<DeflationCandidate> three_eights()
{
    return {cpu_vm("a", 8000, -1, 0.75), cpu_vm("b", 8000, -1, 0.5), cpu_vm("c", 8000, -1, 0.25)};
}

TEST(Deterministic, WalksDecreasingPriority)
{
    const auto p = deflate_deterministic(three_eights(), cpu(10000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2000, 4000, 6000}));
}

TEST(Deterministic, StopsOnceCovered)
{
    const auto p = deflate_deterministic(three_eights(), cpu(1000));
    EXPECT_TRUE(p.feasible);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2000, 0, 0}));
}

TEST(Deterministic, ZeroDemandDeflatesNobody)
{
    const auto p = deflate_deterministic(three_eights(), cpu(0));
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{0, 0, 0}));
}

TEST(Deterministic, IncreasingOrderStartsWithLowestPriority)
{
    const auto p = deflate_deterministic(three_eights(), cpu(1000), DeterministicOrder::increasing_priority);
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{0, 0, 6000}));
}

TEST(Deterministic, TiesGoByIdAscending)
{
    const std::vector vms{cpu_vm("z", 8000, -1, 0.5), cpu_vm("a", 8000, -1, 0.5)};
    const auto p = deflate_deterministic(vms, cpu(100));
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{0, 4000}));
}

TEST(Deterministic, InfeasibleWhenEverybodyIsDown)
{
    const auto p = deflate_deterministic(three_eights(), cpu(12001));
    EXPECT_FALSE(p.feasible);
    EXPECT_EQ(p.shortfall, cpu(1));
}

TEST(Reinflate, ProportionalRestoresEvenDeficits)
{
    const std::vector vms{cpu_vm("a", 8000, 6000), cpu_vm("b", 8000, 6000)};
    const auto p = reinflate(PolicyKind::proportional, vms, cpu(4000));
    EXPECT_EQ(p.direction, PlanDirection::reinflate);
    const auto after = allocations_after(p, vms);
    EXPECT_EQ(after[0], cpu(8000));
    EXPECT_EQ(after[1], cpu(8000));
}

TEST(Reinflate, SurplusIsLeftUnused)
{
    const std::vector vms{cpu_vm("a", 8000, 6000), cpu_vm("b", 4000, 1000)};
    const auto p = reinflate(PolicyKind::min_aware, vms, cpu(100000));
    EXPECT_EQ(p.total(), cpu(5000));
    const auto after = allocations_after(p, vms);
    EXPECT_EQ(after[0], cpu(8000));
    EXPECT_EQ(after[1], cpu(4000));
}

TEST(Reinflate, DeterministicRestoresHighestPriorityFirst)
{
    std::vector vms{cpu_vm("hi", 10000, -1, 0.8), cpu_vm("lo", 10000, -1, 0.3)};
    vms[0].current = cpu(8000);
    vms[1].current = cpu(3000);
    const auto p = reinflate(PolicyKind::deterministic, vms, cpu(2000));
    EXPECT_EQ(cpu_amounts(p), (std::vector<Units>{2000, 0}));
}

TEST(Policy, AllocationFloors)
{
    auto vm = cpu_vm("a", 10000, -1, 0.25, 3000);
    EXPECT_EQ(allocation_floor(PolicyKind::proportional, vm), cpu(0));
    EXPECT_EQ(allocation_floor(PolicyKind::priority, vm), cpu(0));
    EXPECT_EQ(allocation_floor(PolicyKind::min_aware, vm), cpu(3000));
    EXPECT_EQ(allocation_floor(PolicyKind::priority_min_aware, vm), cpu(2500));
    EXPECT_EQ(allocation_floor(PolicyKind::deterministic, vm), cpu(2500));
}

TEST(Policy, ParseNames)
{
    for (auto k : {PolicyKind::proportional, PolicyKind::min_aware, PolicyKind::priority,
                   PolicyKind::priority_min_aware, PolicyKind::deterministic})
    {
        EXPECT_EQ(parse_policy_kind(to_string(k)), k);
    }
    EXPECT_THROW(parse_policy_kind("fair"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Properties over random instances

constexpr PolicyKind equation_kinds[] = {PolicyKind::proportional, PolicyKind::min_aware, PolicyKind::priority,
                                         PolicyKind::priority_min_aware};

ResourceVector random_feasible_demand(std::mt19937_64& rng, PolicyKind kind, std::span<const DeflationCandidate> vms)
{
    ResourceVector reach;
    for (const auto& vm : vms) reach += positive_part(vm.current, allocation_floor(kind, vm));
    ResourceVector r;
    for (Resource d : all_resources)
    {
        r[d] = std::uniform_int_distribution<Units>(0, reach[d])(rng);
    }
    return r;
}

TEST(PolicyProperty, ConservationAndFloors)
{
    std::mt19937_64 rng(11);
    for (auto kind : equation_kinds)
    {
        for (int it = 0; it < 300; ++it)
        {
            const auto vms = random_candidates(rng, 2 + it % 15);
            const auto demand = random_feasible_demand(rng, kind, vms);
            const auto p = deflate(kind, vms, demand);
            ASSERT_TRUE(p.feasible);
            EXPECT_EQ(p.total(), demand) << to_string(kind);
            const auto after = allocations_after(p, vms);
            for (std::size_t i = 0; i < vms.size(); ++i)
            {
                EXPECT_TRUE(p.per_vm[i].amount.non_negative());
                // a VM that already sits below its floor is left alone
                EXPECT_TRUE(dominates(after[i], elementwise_min(vms[i].current, allocation_floor(kind, vms[i]))))
                    << to_string(kind);
            }
        }
    }
}

TEST(PolicyProperty, ProportionalWithinOneUnitOfRatio)
{
    std::mt19937_64 rng(12);
    for (int it = 0; it < 300; ++it)
    {
        auto vms = random_candidates(rng, 2 + it % 10, true);
        const auto demand = random_feasible_demand(rng, PolicyKind::proportional, vms);
        const auto p = deflate_proportional(vms, demand);
        for (Resource r : all_resources)
        {
            Units total = 0;
            for (const auto& vm : vms) total += vm.max[r];
            if (total == 0) continue;
            for (std::size_t i = 0; i < vms.size(); ++i)
            {
                const double ideal = static_cast<double>(vms[i].max[r]) * static_cast<double>(demand[r]) /
                                     static_cast<double>(total);
                EXPECT_LT(std::abs(static_cast<double>(p.per_vm[i].amount[r]) - ideal), 1.0);
            }
        }
    }
}

TEST(PolicyProperty, PriorityMonotoneForEqualSizes)
{
    std::mt19937_64 rng(13);
    for (int it = 0; it < 300; ++it)
    {
        auto vms = random_candidates(rng, 2 + it % 10, true);
        for (auto& vm : vms) vm.max = vm.current = vms[0].max;
        const auto demand = random_feasible_demand(rng, PolicyKind::priority, vms);
        const auto p = deflate_priority(vms, demand);
        for (std::size_t i = 0; i < vms.size(); ++i)
        {
            for (std::size_t j = 0; j < vms.size(); ++j)
            {
                if (vms[i].priority > vms[j].priority)
                {
                    EXPECT_TRUE(dominates(p.per_vm[j].amount, p.per_vm[i].amount));
                }
            }
        }
    }
}

TEST(PolicyProperty, ReinflationUndoesDeflation)
{
    std::mt19937_64 rng(14);
    for (auto kind : equation_kinds)
    {
        for (int it = 0; it < 200; ++it)
        {
            auto vms = random_candidates(rng, 2 + it % 12, true);
            const auto demand = random_feasible_demand(rng, kind, vms);
            const auto down = deflate(kind, vms, demand);
            auto deflated = vms;
            const auto after = allocations_after(down, vms);
            for (std::size_t i = 0; i < vms.size(); ++i) deflated[i].current = after[i];
            const auto up = reinflate(kind, deflated, demand);
            const auto restored = allocations_after(up, deflated);
            for (std::size_t i = 0; i < vms.size(); ++i)
            {
                EXPECT_EQ(restored[i], vms[i].current) << to_string(kind);
            }
        }
    }
}

TEST(PolicyProperty, DeterministicCoversDemandAndIsMinimal)
{
    std::mt19937_64 rng(15);
    for (int it = 0; it < 300; ++it)
    {
        const auto vms = random_candidates(rng, 2 + it % 10);
        const auto demand = random_feasible_demand(rng, PolicyKind::deterministic, vms);
        const auto p = deflate_deterministic(vms, demand);
        ASSERT_TRUE(p.feasible);
        EXPECT_TRUE(dominates(p.total(), demand));
        // dropping the last deflated VM in walk order must leave the demand uncovered
        const auto order = detail::priority_order(vms, true);
        std::optional<std::size_t> last;
        for (auto i : order)
            if (!p.per_vm[i].amount.is_zero()) last = i;
        if (last)
        {
            EXPECT_FALSE(dominates(p.total() - p.per_vm[*last].amount, demand));
        }
    }
}

} // namespace
