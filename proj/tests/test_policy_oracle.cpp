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


#include "oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace vmdeflate;

namespace {

constexpr PolicyKind equation_kinds[] = {PolicyKind::proportional, PolicyKind::min_aware, PolicyKind::priority,
                                         PolicyKind::priority_min_aware};

std::string describe(PolicyKind kind, const std::vector<oracle::Vm>& vms, long long r)
{
    std::ostringstream s;
    s << to_string(kind) << " R=" << r;
    for (const auto& v : vms) s << " [M=" << v.max << " m=" << v.min << " p=" << v.priority << " c=" << v.current << "]";
    return s.str();
}

void expect_match(PolicyKind kind, const std::vector<oracle::Vm>& vms, long long r)
{
    const auto plan = deflate(kind, oracle::to_candidates(vms), {r, 0, 0, 0});
    const auto want = oracle::solve(kind, vms, r);
    ASSERT_TRUE(oracle::matches(plan, want)) << describe(kind, vms, r);
}

TEST(PolicyOracle, KnownExampleThroughOracle)
{
    // the oracle itself reproduces the hand-computed priority example
    const std::vector<oracle::Vm> vms{{10, 0, 0.8, 10}, {10, 0, 0.4, 10}};
    const auto r = oracle::solve(PolicyKind::priority, vms, 10);
    EXPECT_EQ(r.x, (std::vector<long long>{3, 7}));
    const auto q = oracle::solve(PolicyKind::proportional, {{3, 0, 0.5, 3}, {3, 0, 0.5, 3}}, 3);
    EXPECT_EQ(q.x, (std::vector<long long>{2, 1}));
}

TEST(PolicyOracle, SingleVmExhaustive)
{
    for (auto kind : equation_kinds)
        for (long long m = 0; m <= 20; ++m)
            for (long long c = 0; c <= m; ++c)
                for (long long mn = 0; mn <= m; mn += (kind == PolicyKind::min_aware ? 1 : m + 1))
                    for (double p : oracle::small_priorities())
                        for (long long r = 0; r <= m + 1; ++r)
                            expect_match(kind, {{m, mn, p, c}}, r);
}

TEST(PolicyOracle, TwoFreshVmsSmallSizes)
{
    for (auto kind : equation_kinds)
        for (long long m1 = 0; m1 <= 8; ++m1)
            for (long long m2 = 0; m2 <= 8; ++m2)
                for (double p1 : oracle::small_priorities())
                    for (double p2 : oracle::small_priorities())
                        for (long long r = 0; r <= m1 + m2; ++r)
                            expect_match(kind, {{m1, m1 / 3, p1, m1}, {m2, m2 / 2, p2, m2}}, r);
}

TEST(PolicyOracle, RandomThreeAndFourVms)
{
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<long long> size(0, 20);
    std::uniform_int_distribution<std::size_t> pick(0, oracle::small_priorities().size() - 1);
    for (auto kind : equation_kinds)
    {
        for (int it = 0; it < 300; ++it)
        {
            std::vector<oracle::Vm> vms(3 + it % 2);
            long long cap = 0;
            for (auto& v : vms)
            {
                v.max = size(rng);
                v.min = std::uniform_int_distribution<long long>(0, v.max)(rng);
                v.current = std::uniform_int_distribution<long long>(0, v.max)(rng);
                v.priority = oracle::small_priorities()[pick(rng)];
                cap += v.max;
            }
            expect_match(kind, vms, std::uniform_int_distribution<long long>(0, cap)(rng));
        }
    }
}

TEST(PolicyOracle, DeterministicWalk)
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<long long> size(0, 20);
    std::uniform_int_distribution<std::size_t> pick(0, oracle::small_priorities().size() - 1);
    for (int it = 0; it < 2000; ++it)
    {
        std::vector<oracle::Vm> vms(1 + it % 4);
        std::vector<std::string> ids;
        long long cap = 0;
        for (std::size_t i = 0; i < vms.size(); ++i)
        {
            auto& v = vms[i];
            v.max = size(rng);
            v.current = std::uniform_int_distribution<long long>(0, v.max)(rng);
            v.priority = oracle::small_priorities()[pick(rng)];
            ids.push_back("v" + std::to_string(i));
            cap += v.max;
        }
        const long long r = std::uniform_int_distribution<long long>(0, cap)(rng);
        for (bool decreasing : {true, false})
        {
            const auto plan = deflate_deterministic(oracle::to_candidates(vms), {r, 0, 0, 0},
                                                    decreasing ? DeterministicOrder::decreasing_priority
                                                               : DeterministicOrder::increasing_priority);
            ASSERT_TRUE(oracle::matches(plan, oracle::solve_deterministic(vms, ids, r, decreasing)))
                << describe(PolicyKind::deterministic, vms, r);
        }
    }
}

} // namespace
