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

/**
 * \file vmdeflate/placement.hpp
 *
 * \brief Deflation-aware VM placement with admission control.
 *
 * Servers are ranked by the cosine similarity between the VM's demand vector
 * and each server's availability vector, where availability counts the free
 * capacity plus what deflation could still reclaim, discounted by how
 * overcommitted the server already is. The best-ranked server whose local
 * policy can make room wins; if none can, the VM is rejected.
 */

#ifndef VMDEFLATE_PLACEMENT_HPP
#define VMDEFLATE_PLACEMENT_HPP

#include <vmdeflate/mechanism.hpp>
#include <vmdeflate/policy.hpp>
#include <vmdeflate/resources.hpp>
#include <vmdeflate/trace.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace vmdeflate {

inline constexpr double fitness_epsilon = 1e-6;

struct Resident
{
    std::size_t vm = 0;          ///< index into the VM table
    ResourceVector alloc;        ///< current effective allocation
    ResourceVector floor;        ///< lowest allocation allowed; equals M for on-demand VMs
    MechanismState mechanism;
};

struct ServerState
{
    int id = 0;
    ResourceVector capacity;
    std::optional<int> partition;
    std::vector<Resident> residents;
    ResourceVector committed;    ///< sum of resident M
    ResourceVector used;         ///< sum of resident allocations

    const Resident* find(std::size_t vm) const
    {
        for (const auto& r : residents)
        {
            if (r.vm == vm) return &r;
        }
        return nullptr;
    }

    Resident* find(std::size_t vm) { return const_cast<Resident*>(std::as_const(*this).find(vm)); }

    /// Largest committed/capacity ratio over the dimensions the server has.
    double overcommit_factor() const
    {
        double f = 0.0;
        for (Resource r : all_resources)
        {
            if (capacity[r] > 0)
            {
                f = std::max(f, static_cast<double>(committed[r]) / static_cast<double>(capacity[r]));
            }
        }
        return f;
    }
};

/**
 * Total - Used + deflatable / max(1, committed/capacity), per dimension,
 * floored at zero. deflatable sums alloc - floor over the residents.
 */
inline RealVector availability(const ServerState& server)
{
    ResourceVector reclaimable;
    for (const auto& r : server.residents)
    {
        reclaimable += positive_part(r.alloc, r.floor);
    }
    RealVector a{};
    for (Resource r : all_resources)
    {
        const auto i = static_cast<std::size_t>(r);
        double factor = 1.0;
        if (server.capacity[r] > 0)
        {
            factor = std::max(1.0, static_cast<double>(server.committed[r]) / static_cast<double>(server.capacity[r]));
        }
        a[i] = std::max(0.0, static_cast<double>(server.capacity[r] - server.used[r]) +
                                 static_cast<double>(reclaimable[r]) / factor);
    }
    return a;
}

/**
 * Cosine similarity of demand \a d and availability \a a. An all-zero
 * availability gets fitness_epsilon added to every component first.
 *
 * Throws std::invalid_argument for an all-zero demand.
 */
inline double fitness(const RealVector& d, RealVector a)
{
    double dd = 0.0;
    for (double v : d) dd += v * v;
    if (dd == 0.0)
    {
        throw std::invalid_argument("fitness of a zero demand vector");
    }
    double aa = 0.0;
    for (double v : a) aa += v * v;
    if (aa == 0.0)
    {
        for (double& v : a) v += fitness_epsilon;
        aa = static_cast<double>(a.size()) * fitness_epsilon * fitness_epsilon;
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) dot += d[i] * a[i];
    return std::clamp(dot / (std::sqrt(dd) * std::sqrt(aa)), 0.0, 1.0);
}

struct PlacementConfig
{
    PolicyKind policy = PolicyKind::proportional;
    DeterministicOrder order = DeterministicOrder::decreasing_priority;
    bool partitioned = false;
    /// When false no resident is ever deflated: a server qualifies only if
    /// the VM fits in its free capacity.
    bool deflation = true;
};

struct PlacementDecision
{
    std::optional<std::size_t> server;   ///< index into the server span; empty on reject
    DeflationPlan plan;
    /// Resident index per plan entry; npos stands for the arriving VM.
    std::vector<std::size_t> plan_targets;

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    bool rejected() const { return !server.has_value(); }
};

inline DeflationCandidate as_candidate(const VmRecord& vm, const ResourceVector& current)
{
    return {vm.id, vm.max, vm.min, vm.priority, current};
}

/// Reclaim needed on \a server to host \a size at full allocation.
inline ResourceVector needed_reclaim(const ServerState& server, const ResourceVector& size)
{
    return positive_part(server.used + size, server.capacity);
}

/// Deflatable residents of \a server as policy candidates (plus the
/// arriving VM when it is deflatable), with the matching resident indices.
inline std::pair<std::vector<DeflationCandidate>, std::vector<std::size_t>>
deflation_pool(const ServerState& server, std::span<const VmRecord> vms, std::optional<std::size_t> arriving)
{
    std::vector<DeflationCandidate> pool;
    std::vector<std::size_t> targets;
    for (std::size_t i = 0; i < server.residents.size(); ++i)
    {
        const auto& res = server.residents[i];
        if (vms[res.vm].deflatable)
        {
            pool.push_back(as_candidate(vms[res.vm], res.alloc));
            targets.push_back(i);
        }
    }
    if (arriving && vms[*arriving].deflatable)
    {
        pool.push_back(as_candidate(vms[*arriving], vms[*arriving].max));
        targets.push_back(PlacementDecision::npos);
    }
    return {std::move(pool), std::move(targets)};
}

/// Candidate servers for \a vm in rank order.
inline std::vector<std::size_t> rank_servers(const VmRecord& vm, std::span<const ServerState> servers,
                                             const PlacementConfig& config)
{
    struct Scored
    {
        std::size_t index;
        double fit;
        double load;
    };
    std::vector<Scored> scored;
    const RealVector demand = to_real(vm.max);
    const bool zero_demand = vm.max.is_zero();
    for (std::size_t j = 0; j < servers.size(); ++j)
    {
        const auto& s = servers[j];
        if (config.partitioned && vm.deflatable && s.partition != vm.priority_level)
        {
            continue;
        }
        scored.push_back({j, zero_demand ? 0.0 : fitness(demand, availability(s)), s.overcommit_factor()});
    }
    std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
        if (std::abs(a.fit - b.fit) > 1e-12)
        {
            return a.fit > b.fit;
        }
        if (a.load != b.load)
        {
            return a.load < b.load;
        }
        return servers[a.index].id < servers[b.index].id;
    });
    std::vector<std::size_t> out;
    out.reserve(scored.size());
    for (const auto& s : scored)
    {
        out.push_back(s.index);
    }
    return out;
}

/// Runs the local policy on \a server to make room for \a vm.
inline PlacementDecision try_server(std::size_t vm, std::span<const VmRecord> vms, const ServerState& server,
                                    std::size_t server_index, const PlacementConfig& config)
{
    PlacementDecision d;
    const ResourceVector need = needed_reclaim(server, vms[vm].max);
    auto [pool, targets] = deflation_pool(server, vms, vm);
    if (!config.deflation)
    {
        if (!need.is_zero())
        {
            return d;
        }
        d.plan.per_vm.reserve(pool.size());
        for (const auto& c : pool)
        {
            d.plan.per_vm.push_back({c.id, {}});
        }
    }
    else
    {
        d.plan = deflate(config.policy, pool, need, config.order);
        if (!d.plan.feasible)
        {
            return d;
        }
    }
    d.server = server_index;
    d.plan_targets = std::move(targets);
    return d;
}

/**
 * Picks a server for \a vm, or rejects it.
 *
 * Servers (restricted to the VM's priority pool when partitioned; on-demand
 * VMs may go anywhere) are ranked by fitness, then by lower overcommitment,
 * then by id. The first one whose policy yields a feasible plan is chosen.
 * The arriving VM itself takes part in the plan when it is deflatable, so it
 * may start deflated. Nothing is modified; see admit().
 */
inline PlacementDecision place(std::size_t vm, std::span<const VmRecord> vms, std::span<const ServerState> servers,
                               const PlacementConfig& config)
{
    for (std::size_t j : rank_servers(vms[vm], servers, config))
    {
        auto d = try_server(vm, vms, servers[j], j, config);
        if (!d.rejected())
        {
            return d;
        }
    }
    return {};
}

/// Applies a deflation plan to residents of \a server (and optionally to
/// the arriving resident), keeping used in sync.
inline void apply_plan(ServerState& server, const DeflationPlan& plan, std::span<const std::size_t> targets,
                       Resident* arriving = nullptr)
{
    for (std::size_t k = 0; k < plan.per_vm.size(); ++k)
    {
        const auto& amount = plan.per_vm[k].amount;
        Resident* r = targets[k] == PlacementDecision::npos ? arriving : &server.residents[targets[k]];
        if (r == nullptr)
        {
            throw std::logic_error("plan refers to a VM that is not being admitted");
        }
        const ResourceVector before = r->alloc;
        r->alloc = plan.direction == PlanDirection::deflate ? before - amount : before + amount;
        if (targets[k] != PlacementDecision::npos)
        {
            server.used -= before;
            server.used += r->alloc;
        }
    }
}

/// Commits \a decision: deflates residents per the plan and adds \a vm.
inline void admit(ServerState& server, const PlacementDecision& decision, Resident vm)
{
    apply_plan(server, decision.plan, decision.plan_targets, &vm);
    server.used += vm.alloc;
    server.committed += vm.mechanism.max;
    server.residents.push_back(std::move(vm));
}

/// Removes the resident for \a vm and returns it.
inline Resident evict(ServerState& server, std::size_t vm)
{
    auto it = std::find_if(server.residents.begin(), server.residents.end(),
                           [vm](const Resident& r) { return r.vm == vm; });
    if (it == server.residents.end())
    {
        throw std::logic_error("VM is not resident on this server");
    }
    Resident out = std::move(*it);
    server.residents.erase(it);
    server.used -= out.alloc;
    server.committed -= out.mechanism.max;
    return out;
}

} // namespace vmdeflate

#endif // VMDEFLATE_PLACEMENT_HPP
