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
 * \file vmdeflate/policy.hpp
 *
 * \brief Server-local deflation policies.
 *
 * Given the deflatable VMs resident on a server and a reclaim demand R, each
 * policy decides how much x_i to take from every VM, independently for each
 * resource dimension:
 *
 * - proportional:        x_i = M_i - a M_i
 * - min_aware:           x_i = (M_i - m_i) - a (M_i - m_i)
 * - priority:            x_i = M_i - a p_i M_i
 * - priority_min_aware:  x_i = (M_i - p_i M_i) - a p_i (M_i - p_i M_i)
 * - deterministic:       binary, each VM is either at M_i or at p_i M_i
 *
 * where a is solved from sum(x_i) = R. Every x_i is clamped to
 * [0, current_i - floor_i]; clamped VMs drop out and a is re-solved on the
 * rest (water-filling). The continuous solution is computed in exact rational
 * arithmetic and rounded to integer units with the largest-remainder rule,
 * ties going to the VM that comes first in the input. Hence, for feasible
 * plans, sum(x_i) == R holds exactly.
 *
 * Priorities are resolved to 1e-6 before they enter the solver.
 */

#ifndef VMDEFLATE_POLICY_HPP
#define VMDEFLATE_POLICY_HPP

#include <vmdeflate/resources.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vmdeflate {

enum class PolicyKind { proportional, min_aware, priority, priority_min_aware, deterministic };

/// Walk order of the deterministic policy.
enum class DeterministicOrder { decreasing_priority, increasing_priority };

enum class PlanDirection { deflate, reinflate };

inline std::string_view to_string(PolicyKind k)
{
    switch (k)
    {
        case PolicyKind::proportional: return "proportional";
        case PolicyKind::min_aware: return "min_aware";
        case PolicyKind::priority: return "priority";
        case PolicyKind::priority_min_aware: return "priority_min_aware";
        case PolicyKind::deterministic: return "deterministic";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s)
{
    if (s == "proportional") return PolicyKind::proportional;
    if (s == "min_aware") return PolicyKind::min_aware;
    if (s == "priority") return PolicyKind::priority;
    if (s == "priority_min_aware") return PolicyKind::priority_min_aware;
    if (s == "deterministic") return PolicyKind::deterministic;
    throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

inline std::string_view to_string(DeterministicOrder o)
{
    return o == DeterministicOrder::decreasing_priority ? "decreasing_pi" : "increasing_pi";
}

inline DeterministicOrder parse_deterministic_order(std::string_view s)
{
    if (s == "decreasing_pi") return DeterministicOrder::decreasing_priority;
    if (s == "increasing_pi") return DeterministicOrder::increasing_priority;
    throw std::invalid_argument("unknown deterministic order '" + std::string(s) + "'");
}

/// One deflatable VM as seen by a server-local policy.
struct DeflationCandidate
{
    std::string id;
    ResourceVector max;       ///< M_i
    ResourceVector min;       ///< m_i, used by min_aware only
    double priority = 0.5;    ///< p_i in (0,1), used by the priority-based kinds
    ResourceVector current;   ///< allocation before the plan is applied
};

struct VmReclaim
{
    std::string id;
    ResourceVector amount;
};

struct DeflationPlan
{
    PlanDirection direction = PlanDirection::deflate;
    /// One entry per input VM, in input order. Amounts are magnitudes: taken
    /// away when deflating, given back when reinflating.
    std::vector<VmReclaim> per_vm;
    bool feasible = true;
    ResourceVector shortfall;
    /// Solved coefficient per resource dimension, in the units of the
    /// policy's own equation. Zero for the deterministic policy.
    std::array<double, num_resources> alpha{};

    const ResourceVector& at(std::string_view id) const
    {
        for (const auto& e : per_vm)
        {
            if (e.id == id)
            {
                return e.amount;
            }
        }
        throw std::out_of_range("no VM '" + std::string(id) + "' in plan");
    }

    ResourceVector total() const
    {
        ResourceVector t;
        for (const auto& e : per_vm)
        {
            t += e.amount;
        }
        return t;
    }
};

/// Lowest allocation a policy may leave a VM with.
inline ResourceVector allocation_floor(PolicyKind kind, const DeflationCandidate& vm)
{
    switch (kind)
    {
        case PolicyKind::proportional:
        case PolicyKind::priority:
            return {};
        case PolicyKind::min_aware:
            return vm.min;
        case PolicyKind::priority_min_aware:
        case PolicyKind::deterministic:
            return scale(vm.max, vm.priority);
    }
    return {};
}

/// Allocations after applying \a plan to \a vms (same order).
inline std::vector<ResourceVector> allocations_after(const DeflationPlan& plan,
                                                     std::span<const DeflationCandidate> vms)
{
    if (plan.per_vm.size() != vms.size())
    {
        throw std::invalid_argument("plan does not match VM list");
    }
    std::vector<ResourceVector> out;
    out.reserve(vms.size());
    for (std::size_t i = 0; i < vms.size(); ++i)
    {
        out.push_back(plan.direction == PlanDirection::deflate
                          ? vms[i].current - plan.per_vm[i].amount
                          : vms[i].current + plan.per_vm[i].amount);
    }
    return out;
}

namespace detail {

using Wide = __int128;

inline constexpr std::int64_t priority_resolution = 1'000'000;

/// x(a) = clamp(offset - a * weight, lo, hi)
struct AffineTerm
{
    Units offset = 0;
    Units weight = 0;
    Units lo = 0;
    Units hi = 0;
};

struct Rational
{
    Wide num = 0;
    Wide den = 1; // > 0

    friend bool operator<(const Rational& x, const Rational& y) { return x.num * y.den < y.num * x.den; }
    friend bool operator==(const Rational& x, const Rational& y) { return x.num * y.den == y.num * x.den; }
    long double to_long_double() const
    {
        return static_cast<long double>(num) / static_cast<long double>(den);
    }
};

struct WaterFill
{
    bool feasible = true;
    std::vector<Rational> x;
    Rational alpha{1, 1};
};

inline Wide clamp_wide(Wide v, Wide lo, Wide hi) { return v < lo ? lo : (v > hi ? hi : v); }

/// Solves sum_i clamp(offset_i - a weight_i, lo_i, hi_i) = target for a.
/// When the target is out of reach the terms are pinned at the nearer bound.
inline WaterFill solve_water_fill(std::span<const AffineTerm> terms, Units target)
{
    WaterFill out;
    out.x.assign(terms.size(), Rational{});

    Wide fixed = 0;
    Wide sum_lo = 0;
    Wide sum_hi = 0;
    std::vector<Rational> breaks;
    for (std::size_t i = 0; i < terms.size(); ++i)
    {
        const auto& t = terms[i];
        if (t.weight <= 0)
        {
            const Wide v = clamp_wide(t.offset, t.lo, t.hi);
            out.x[i] = Rational{v, 1};
            fixed += v;
            continue;
        }
        sum_lo += t.lo;
        sum_hi += t.hi;
        breaks.push_back(Rational{Wide(t.offset) - t.hi, t.weight});
        breaks.push_back(Rational{Wide(t.offset) - t.lo, t.weight});
    }

    const Wide goal = Wide(target) - fixed;
    if (goal > sum_hi || goal < sum_lo)
    {
        out.feasible = false;
        const bool above = goal > sum_hi;
        for (std::size_t i = 0; i < terms.size(); ++i)
        {
            if (terms[i].weight > 0)
            {
                out.x[i] = Rational{above ? terms[i].hi : terms[i].lo, 1};
            }
        }
        out.alpha = Rational{0, 1};
        return out;
    }
    if (breaks.empty())
    {
        return out;
    }

    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    // f(t) >= goal, evaluated exactly at a rational breakpoint t
    auto reaches = [&](const Rational& t) {
        Wide total = 0;
        for (const auto& term : terms)
        {
            if (term.weight <= 0)
            {
                continue;
            }
            const Wide v = Wide(term.offset) * t.den - t.num * term.weight;
            total += clamp_wide(v, Wide(term.lo) * t.den, Wide(term.hi) * t.den);
        }
        return total >= goal * t.den;
    };

    std::size_t k = 0;
    for (std::size_t j = 0; j < breaks.size(); ++j)
    {
        if (reaches(breaks[j]))
        {
            k = j;
        }
        else
        {
            break; // f is non-increasing
        }
    }

    if (k + 1 == breaks.size())
    {
        const Rational a = breaks[k];
        for (std::size_t i = 0; i < terms.size(); ++i)
        {
            const auto& t = terms[i];
            if (t.weight <= 0)
            {
                continue;
            }
            const Wide v = Wide(t.offset) * a.den - a.num * t.weight;
            out.x[i] = Rational{clamp_wide(v, Wide(t.lo) * a.den, Wide(t.hi) * a.den), a.den};
        }
        out.alpha = a;
        return out;
    }

    const Rational left = breaks[k];
    const Rational right = breaks[k + 1];
    Wide sum_offset = 0;
    Wide sum_weight = 0;
    Wide clamped = 0;
    std::vector<bool> active(terms.size(), false);
    for (std::size_t i = 0; i < terms.size(); ++i)
    {
        const auto& t = terms[i];
        if (t.weight <= 0)
        {
            continue;
        }
        const Rational to_hi{Wide(t.offset) - t.hi, t.weight};
        const Rational to_lo{Wide(t.offset) - t.lo, t.weight};
        if (!(to_hi < right))
        {
            out.x[i] = Rational{t.hi, 1};
            clamped += t.hi;
        }
        else if (!(left < to_lo))
        {
            out.x[i] = Rational{t.lo, 1};
            clamped += t.lo;
        }
        else
        {
            active[i] = true;
            sum_offset += t.offset;
            sum_weight += t.weight;
        }
    }
    // a = (sum_offset - (goal - clamped)) / sum_weight
    const Wide num = sum_offset - goal + clamped;
    for (std::size_t i = 0; i < terms.size(); ++i)
    {
        if (active[i])
        {
            out.x[i] = Rational{Wide(terms[i].offset) * sum_weight - Wide(terms[i].weight) * num, sum_weight};
        }
    }
    out.alpha = Rational{num, sum_weight};
    return out;
}

inline Wide floor_div(Wide n, Wide d)
{
    Wide q = n / d;
    if ((n % d != 0) && ((n < 0) != (d < 0)))
    {
        --q;
    }
    return q;
}

/// Largest-remainder rounding of non-negative rationals to integers summing
/// to \a total. Ties go to the lower index.
inline std::vector<Units> round_largest_remainder(std::span<const Rational> values, Units total)
{
    const std::size_t n = values.size();
    std::vector<Units> out(n);
    std::vector<Rational> rem(n);
    Wide assigned = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        const Wide f = floor_div(values[i].num, values[i].den);
        out[i] = static_cast<Units>(f);
        rem[i] = Rational{values[i].num - f * values[i].den, values[i].den};
        assigned += f;
    }
    Wide left = Wide(total) - assigned;
    if (left <= 0)
    {
        return out;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rem[b] < rem[a]; });
    for (std::size_t j = 0; j < n && left > 0; ++j)
    {
        if (rem[order[j]].num == 0)
        {
            break;
        }
        ++out[order[j]];
        --left;
    }
    return out;
}

inline Units priority_weight(double priority)
{
    return static_cast<Units>(std::llround(priority * static_cast<double>(priority_resolution)));
}

inline void check_priority(const DeflationCandidate& vm)
{
    if (!(vm.priority > 0.0 && vm.priority < 1.0))
    {
        throw std::invalid_argument("VM '" + vm.id + "': priority must lie in (0,1)");
    }
    if (priority_weight(vm.priority) == 0 && !vm.max.is_zero())
    {
        throw std::invalid_argument("VM '" + vm.id + "': priority below solver resolution");
    }
}

inline void check_candidate(const DeflationCandidate& vm)
{
    if (!vm.max.non_negative() || !vm.current.non_negative())
    {
        throw std::invalid_argument("VM '" + vm.id + "': negative resource amount");
    }
    if (!dominates(vm.max, vm.current))
    {
        throw std::invalid_argument("VM '" + vm.id + "': current allocation exceeds maximum");
    }
}

/// Equation shape for one VM and one dimension: x = offset - a * weight.
inline AffineTerm equation_term(PolicyKind kind, const DeflationCandidate& vm, Resource r)
{
    const Units m = vm.max[r];
    switch (kind)
    {
        case PolicyKind::proportional:
            return {m, m, 0, 0};
        case PolicyKind::min_aware:
        {
            const Units h = m - vm.min[r];
            return {h, h, 0, 0};
        }
        case PolicyKind::priority:
            return {m, m * priority_weight(vm.priority), 0, 0};
        case PolicyKind::priority_min_aware:
        {
            const Units h = m - scale(vm.max, vm.priority)[r];
            return {h, h * priority_weight(vm.priority), 0, 0};
        }
        case PolicyKind::deterministic:
            break;
    }
    throw std::invalid_argument("deterministic policy has no equation form");
}

inline double alpha_scale(PolicyKind kind)
{
    return (kind == PolicyKind::priority || kind == PolicyKind::priority_min_aware)
               ? static_cast<double>(priority_resolution)
               : 1.0;
}

inline void validate(PolicyKind kind, std::span<const DeflationCandidate> vms)
{
    for (const auto& vm : vms)
    {
        check_candidate(vm);
        if (kind == PolicyKind::min_aware && !(dominates(vm.max, vm.min) && vm.min.non_negative()))
        {
            throw std::invalid_argument("VM '" + vm.id + "': minimum must satisfy 0 <= m <= M");
        }
        if (kind == PolicyKind::priority || kind == PolicyKind::priority_min_aware ||
            kind == PolicyKind::deterministic)
        {
            check_priority(vm);
        }
    }
}

inline DeflationPlan solve_equation_plan(PolicyKind kind, std::span<const DeflationCandidate> vms,
                                         const ResourceVector& amount, PlanDirection direction)
{
    if (!amount.non_negative())
    {
        throw std::invalid_argument("reclaim demand must be non-negative");
    }
    validate(kind, vms);

    DeflationPlan plan;
    plan.direction = direction;
    plan.per_vm.reserve(vms.size());
    for (const auto& vm : vms)
    {
        plan.per_vm.push_back({vm.id, {}});
    }

    std::vector<AffineTerm> terms(vms.size());
    for (Resource r : all_resources)
    {
        Units reach = 0;
        for (std::size_t i = 0; i < vms.size(); ++i)
        {
            AffineTerm t = equation_term(kind, vms[i], r);
            const Units floor = allocation_floor(kind, vms[i])[r];
            if (direction == PlanDirection::deflate)
            {
                t.lo = 0;
                t.hi = std::clamp<Units>(vms[i].current[r] - floor, 0, std::max<Units>(t.offset, 0));
                reach += t.weight > 0 ? t.hi : 0;
            }
            else
            {
                t.lo = -std::max<Units>(vms[i].max[r] - vms[i].current[r], 0);
                t.hi = 0;
                reach += t.weight > 0 ? -t.lo : 0;
            }
            terms[i] = t;
        }

        Units want = amount[r];
        if (direction == PlanDirection::reinflate)
        {
            // leftover beyond the total deficit stays unused
            want = -std::min(want, reach);
        }
        else if (want > reach)
        {
            plan.feasible = false;
            plan.shortfall[r] = want - reach;
        }

        const WaterFill fill = solve_water_fill(terms, want);
        plan.alpha[static_cast<std::size_t>(r)] = fill.alpha.to_long_double() * alpha_scale(kind);

        std::vector<Rational> magnitude = fill.x;
        if (direction == PlanDirection::reinflate)
        {
            for (auto& m : magnitude)
            {
                m.num = -m.num;
            }
        }
        const Units total = fill.feasible ? (want < 0 ? -want : want) : reach;
        const auto rounded = round_largest_remainder(magnitude, total);
        for (std::size_t i = 0; i < vms.size(); ++i)
        {
            plan.per_vm[i].amount[r] = rounded[i];
        }
    }
    return plan;
}

inline std::vector<std::size_t> priority_order(std::span<const DeflationCandidate> vms, bool decreasing)
{
    std::vector<std::size_t> order(vms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (vms[a].priority != vms[b].priority)
        {
            return decreasing ? vms[a].priority > vms[b].priority : vms[a].priority < vms[b].priority;
        }
        return vms[a].id < vms[b].id;
    });
    return order;
}

} // namespace detail

/// Reclaims in proportion to each VM's maximum size M_i.
inline DeflationPlan deflate_proportional(std::span<const DeflationCandidate> vms, const ResourceVector& demand)
{
    return detail::solve_equation_plan(PolicyKind::proportional, vms, demand, PlanDirection::deflate);
}

/// Reclaims in proportion to the headroom M_i - m_i, never going below m_i.
inline DeflationPlan deflate_min_aware(std::span<const DeflationCandidate> vms, const ResourceVector& demand)
{
    return detail::solve_equation_plan(PolicyKind::min_aware, vms, demand, PlanDirection::deflate);
}

/// Priority-weighted proportional deflation. A raw share that would be
/// negative (a high-priority VM asked to grow) is clamped at zero and the
/// remaining VMs absorb the difference.
inline DeflationPlan deflate_priority(std::span<const DeflationCandidate> vms, const ResourceVector& demand)
{
    return detail::solve_equation_plan(PolicyKind::priority, vms, demand, PlanDirection::deflate);
}

/// Priority-weighted deflation of the headroom above the floor p_i M_i.
inline DeflationPlan deflate_priority_min_aware(std::span<const DeflationCandidate> vms,
                                                const ResourceVector& demand)
{
    return detail::solve_equation_plan(PolicyKind::priority_min_aware, vms, demand, PlanDirection::deflate);
}

/**
 * Binary deflation: VMs are taken in priority order (ties by id) and each
 * one is dropped all the way to p_i M_i until every dimension of the demand
 * is covered. The last VM is deflated fully as well, so the plan may reclaim
 * more than asked for.
 */
inline DeflationPlan deflate_deterministic(std::span<const DeflationCandidate> vms, const ResourceVector& demand,
                                           DeterministicOrder order = DeterministicOrder::decreasing_priority)
{
    if (!demand.non_negative())
    {
        throw std::invalid_argument("reclaim demand must be non-negative");
    }
    detail::validate(PolicyKind::deterministic, vms);

    DeflationPlan plan;
    for (const auto& vm : vms)
    {
        plan.per_vm.push_back({vm.id, {}});
    }

    ResourceVector got;
    for (std::size_t i : detail::priority_order(vms, order == DeterministicOrder::decreasing_priority))
    {
        if (dominates(got, demand))
        {
            break;
        }
        const ResourceVector take = positive_part(vms[i].current, allocation_floor(PolicyKind::deterministic, vms[i]));
        if (take.is_zero())
        {
            continue;
        }
        plan.per_vm[i].amount = take;
        got += take;
    }
    plan.shortfall = positive_part(demand, got);
    plan.feasible = plan.shortfall.is_zero();
    return plan;
}

inline DeflationPlan deflate(PolicyKind kind, std::span<const DeflationCandidate> vms, const ResourceVector& demand,
                             DeterministicOrder order = DeterministicOrder::decreasing_priority)
{
    if (kind == PolicyKind::deterministic)
    {
        return deflate_deterministic(vms, demand, order);
    }
    return detail::solve_equation_plan(kind, vms, demand, PlanDirection::deflate);
}

/**
 * Hands \a freed resources back to deflated VMs.
 *
 * Equation-based kinds run their equation with R = -freed, capping every VM
 * at its M_i. The deterministic kind restores whole VMs to M_i, highest
 * priority first, and stops at the first VM whose deficit no longer fits.
 * Resources beyond the total deficit are left unused.
 */
inline DeflationPlan reinflate(PolicyKind kind, std::span<const DeflationCandidate> vms, const ResourceVector& freed)
{
    if (kind != PolicyKind::deterministic)
    {
        return detail::solve_equation_plan(kind, vms, freed, PlanDirection::reinflate);
    }
    if (!freed.non_negative())
    {
        throw std::invalid_argument("freed resources must be non-negative");
    }
    detail::validate(kind, vms);

    DeflationPlan plan;
    plan.direction = PlanDirection::reinflate;
    for (const auto& vm : vms)
    {
        plan.per_vm.push_back({vm.id, {}});
    }
    ResourceVector pool = freed;
    for (std::size_t i : detail::priority_order(vms, true))
    {
        const ResourceVector deficit = vms[i].max - vms[i].current;
        if (deficit.is_zero())
        {
            continue;
        }
        if (!dominates(pool, deficit))
        {
            break;
        }
        plan.per_vm[i].amount = deficit;
        pool -= deficit;
    }
    return plan;
}

} // namespace vmdeflate

#endif // VMDEFLATE_POLICY_HPP
