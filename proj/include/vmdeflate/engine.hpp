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
 * \file vmdeflate/engine.hpp
 *
 * \brief Trace-driven discrete-event cluster simulator.
 *
 * Replays VM arrivals and departures against a cluster of identical servers.
 * Arrivals go through deflation-aware placement; departures hand the freed
 * capacity back to deflated co-residents. A periodic tick at the trace
 * interval refreshes every VM's memory hotplug threshold from its current
 * utilization. Under the preemption baseline nothing is ever deflated and
 * resource pressure is resolved by preempting deflatable VMs instead.
 *
 * Events at the same timestamp run departures first, then arrivals, then the
 * tick; ties are broken by trace order. A run is single-threaded and fully
 * deterministic.
 */

#ifndef VMDEFLATE_ENGINE_HPP
#define VMDEFLATE_ENGINE_HPP

#include <vmdeflate/config.hpp>
#include <vmdeflate/mechanism.hpp>
#include <vmdeflate/placement.hpp>
#include <vmdeflate/policy.hpp>
#include <vmdeflate/resources.hpp>
#include <vmdeflate/trace.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace vmdeflate {

/// The configuration cannot be simulated at all (e.g. a VM larger than a server).
class InfeasibleConfig : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class Baseline { deflation, preemption };

enum class Pricing { static_discount, priority_linear, allocation_linear };

inline std::string_view to_string(Baseline b) { return b == Baseline::deflation ? "deflation" : "preemption"; }

inline Baseline parse_baseline(std::string_view s)
{
    if (s == "deflation") return Baseline::deflation;
    if (s == "preemption") return Baseline::preemption;
    throw InputError("unknown baseline '" + std::string(s) + "'");
}

inline std::string_view to_string(Pricing p)
{
    switch (p)
    {
        case Pricing::static_discount: return "static_discount";
        case Pricing::priority_linear: return "priority_linear";
        case Pricing::allocation_linear: return "allocation_linear";
    }
    return "?";
}

inline Pricing parse_pricing(std::string_view s)
{
    if (s == "static_discount") return Pricing::static_discount;
    if (s == "priority_linear") return Pricing::priority_linear;
    if (s == "allocation_linear") return Pricing::allocation_linear;
    throw InputError("unknown pricing '" + std::string(s) + "'");
}

struct PricingConfig
{
    Pricing scheme = Pricing::static_discount;
    double static_rate = 0.2;      ///< deflatable price relative to on-demand
    double allocation_rate = 0.2;  ///< full-allocation rate for allocation_linear
    double on_demand_rate = 1.0;   ///< per vCPU-hour
};

struct ScenarioConfig
{
    std::size_t servers = 1;
    ResourceVector server_capacity{48000, 131072, 0, 0};
    PolicyKind policy = PolicyKind::proportional;
    DeterministicOrder order = DeterministicOrder::decreasing_priority;
    bool partitioned = false;
    Baseline baseline = Baseline::deflation;
    PricingConfig pricing;
    std::uint64_t seed = 1;

    // trace source: a directory or a synthetic spec file
    std::filesystem::path trace_dir;
    std::filesystem::path synthetic_spec;
    std::optional<std::size_t> sample_count;

    int priority_levels = 4;
    double min_alloc_fraction = 0.2;
    Units hp_threshold_vcpus = 1;
    Units mem_block_mb = default_mem_block_mb;
    double unplug_success = 1.0;

    /// Cluster size with no overcommitment; searched for when absent.
    std::optional<std::size_t> reference_servers;
    bool record_events = true;
    bool check_invariants = true;
};

struct AllocationStep
{
    Seconds t = 0;
    Units cpu = 0;
    Units mem = 0;
};

enum class VmStatus { completed, preempted, rejected };

inline std::string_view to_string(VmStatus s)
{
    switch (s)
    {
        case VmStatus::completed: return "completed";
        case VmStatus::preempted: return "preempted";
        case VmStatus::rejected: return "rejected";
    }
    return "?";
}

struct VmOutcome
{
    std::string id;
    bool deflatable = false;
    double priority = 0.0;
    ResourceVector max;
    int server = -1;
    VmStatus status = VmStatus::rejected;
    Seconds start = 0;
    Seconds end = 0;
    std::vector<AllocationStep> timeline;
    double demand_mcore_s = 0.0;
    double underalloc_mcore_s = 0.0;
    double throughput_loss = 0.0;
    double alloc_fraction_s = 0.0;  ///< integral of alloc.cpu / M.cpu over the run time
    double bill = 0.0;
};

struct SimEvent
{
    Seconds t = 0;
    std::string kind;
    std::string vm;
    int server = -1;
};

struct RevenueSummary
{
    double total = 0.0;
    double on_demand = 0.0;
    double deflatable = 0.0;
    double per_server = 0.0;
    double reference_per_server = 0.0;
    double ratio = 0.0;  ///< per_server / reference_per_server
};

struct SimReport
{
    ScenarioConfig config;
    std::size_t servers = 0;
    std::size_t reference_servers = 0;
    std::size_t vm_count = 0;
    std::size_t deflatable_count = 0;
    std::size_t failure_count = 0;       ///< preempted + rejected deflatable VMs
    std::size_t preempted_count = 0;
    std::size_t rejected_deflatable = 0;
    std::size_t rejected_on_demand = 0;
    std::size_t pressure_events = 0;
    double failure_probability = 0.0;
    double throughput_loss = 0.0;
    double overcommitment = 0.0;          ///< peak committed / capacity
    double cluster_overcommitment = 0.0;  ///< reference_servers / servers - 1
    RevenueSummary revenue;
    std::vector<VmOutcome> vms;
    std::vector<SimEvent> events;
};

// ---------------------------------------------------------------------------
// Throughput and revenue

struct UnderallocTotals
{
    double demand = 0.0;      ///< mcore-seconds
    double underalloc = 0.0;  ///< mcore-seconds above the allocation
    double alloc_fraction_s = 0.0;

    /// Zero when there was no demand at all.
    double loss() const { return demand > 0.0 ? underalloc / demand : 0.0; }
};

/**
 * Integrates demand util(t) * M.cpu and its excess over the allocation on
 * [start, end). Utilization holds for one interval after each sample;
 * the allocation is a step function given by \a timeline.
 */
inline UnderallocTotals integrate_underallocation(const VmRecord& vm, std::span<const AllocationStep> timeline,
                                                  Seconds start, Seconds end, Seconds interval)
{
    UnderallocTotals out;
    if (end <= start || timeline.empty())
    {
        return out;
    }
    const double mcpu = static_cast<double>(vm.max.cpu);

    // change points of either step function
    std::vector<Seconds> cuts{start, end};
    for (const auto& s : vm.util_series)
    {
        if (s.t > start && s.t < end) cuts.push_back(s.t);
        if (s.t + interval > start && s.t + interval < end) cuts.push_back(s.t + interval);
    }
    for (const auto& a : timeline)
    {
        if (a.t > start && a.t < end) cuts.push_back(a.t);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::size_t ui = 0;
    std::size_t ai = 0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
    {
        const Seconds a = cuts[k];
        const auto dt = static_cast<double>(cuts[k + 1] - a);
        while (ai + 1 < timeline.size() && timeline[ai + 1].t <= a) ++ai;
        while (ui + 1 < vm.util_series.size() && vm.util_series[ui + 1].t <= a) ++ui;
        double util = 0.0;
        if (!vm.util_series.empty())
        {
            const auto& s = vm.util_series[ui];
            if (s.t <= a && a < s.t + interval) util = s.cpu;
        }
        const double alloc = static_cast<double>(timeline[ai].cpu);
        const double demand = util * mcpu;
        out.demand += demand * dt;
        out.underalloc += std::max(0.0, demand - alloc) * dt;
        out.alloc_fraction_s += (mcpu > 0.0 ? alloc / mcpu : 1.0) * dt;
    }
    return out;
}

/// Throughput loss of one VM: underallocation area over demand area.
inline double throughput_loss(const VmRecord& vm, std::span<const AllocationStep> timeline, Seconds start,
                              Seconds end, Seconds interval)
{
    return integrate_underallocation(vm, timeline, start, end, interval).loss();
}

inline double vm_size_units(const ResourceVector& max) { return static_cast<double>(max.cpu) / 1000.0; }

/**
 * Bill for one VM in on-demand vCPU-hours. On-demand VMs pay the full rate.
 * Deflatable VMs pay static_rate, their priority, or allocation_rate scaled
 * by the fraction of M they actually held over time.
 */
inline double bill(const VmOutcome& vm, const PricingConfig& pricing)
{
    if (vm.status == VmStatus::rejected)
    {
        return 0.0;
    }
    const double hours = static_cast<double>(vm.end - vm.start) / 3600.0;
    const double size = vm_size_units(vm.max) * pricing.on_demand_rate;
    if (!vm.deflatable)
    {
        return size * hours;
    }
    switch (pricing.scheme)
    {
        case Pricing::static_discount: return pricing.static_rate * size * hours;
        case Pricing::priority_linear: return vm.priority * size * hours;
        case Pricing::allocation_linear: return pricing.allocation_rate * size * vm.alloc_fraction_s / 3600.0;
    }
    return 0.0;
}

/// Bill of \a vm had it run its full lifetime undeflated.
inline double full_allocation_bill(const VmRecord& vm, const PricingConfig& pricing)
{
    VmOutcome o;
    o.deflatable = vm.deflatable;
    o.priority = vm.priority;
    o.max = vm.max;
    o.status = VmStatus::completed;
    o.start = vm.arrival;
    o.end = vm.departure;
    o.alloc_fraction_s = static_cast<double>(vm.lifetime());
    return bill(o, pricing);
}

/// Re-prices the VMs of a finished run.
inline RevenueSummary revenue(const SimReport& report, const PricingConfig& pricing, double reference_total)
{
    RevenueSummary r;
    for (const auto& vm : report.vms)
    {
        const double b = bill(vm, pricing);
        (vm.deflatable ? r.deflatable : r.on_demand) += b;
    }
    r.total = r.on_demand + r.deflatable;
    r.per_server = report.servers > 0 ? r.total / static_cast<double>(report.servers) : 0.0;
    r.reference_per_server =
        report.reference_servers > 0 ? reference_total / static_cast<double>(report.reference_servers) : 0.0;
    r.ratio = r.reference_per_server > 0.0 ? r.per_server / r.reference_per_server : 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Trace preparation

/// Applies the per-VM derivations to an in-memory trace.
inline void prepare_records(std::vector<VmRecord>& records, const ScenarioConfig& config)
{
    mark_deflatable(records);
    assign_priorities(records, config.priority_levels);
    set_min_fraction(records, config.min_alloc_fraction);
}

/// Loads or generates the trace named by \a config and derives deflatability,
/// priorities and minimum allocations.
inline Trace prepare_trace(const ScenarioConfig& config)
{
    Trace trace;
    std::optional<Sampling> sampling;
    if (config.sample_count)
    {
        sampling = Sampling{*config.sample_count, config.seed};
    }
    if (!config.trace_dir.empty())
    {
        trace = load_trace(config.trace_dir, sampling);
    }
    else if (!config.synthetic_spec.empty())
    {
        trace = gen_synthetic(parse_synthetic_spec(KeyValueFile::load(config.synthetic_spec.string())));
    }
    else
    {
        throw InputError("scenario names no trace (set trace_dir or synthetic_spec)");
    }
    prepare_records(trace.records, config);
    return trace;
}

namespace detail {

inline void check_config(const ScenarioConfig& config, const Trace& trace)
{
    if (config.servers < 1)
    {
        throw InputError("servers must be >= 1");
    }
    if (!config.server_capacity.non_negative() || config.server_capacity.is_zero())
    {
        throw InputError("server capacity must be non-negative and non-zero");
    }
    if (!(config.pricing.static_rate > 0.0 && config.pricing.static_rate <= 1.0))
    {
        throw InputError("static_rate must lie in (0,1]");
    }
    if (!(config.pricing.allocation_rate > 0.0))
    {
        throw InputError("allocation_rate must be positive");
    }
    if (!(config.unplug_success >= 0.0 && config.unplug_success <= 1.0))
    {
        throw InputError("unplug_success must lie in [0,1]");
    }
    if (trace.meta.interval_s <= 0)
    {
        throw InputError("trace interval must be positive");
    }
    for (const auto& vm : trace.records)
    {
        if (!dominates(config.server_capacity, vm.max))
        {
            throw InfeasibleConfig("VM '" + vm.id + "' does not fit on an empty server");
        }
        if (vm.arrival >= vm.departure)
        {
            throw InputError("VM '" + vm.id + "' departs before it arrives");
        }
        if (vm.deflatable && !(vm.priority > 0.0 && vm.priority < 1.0))
        {
            throw InputError("deflatable VM '" + vm.id + "' has no priority in (0,1)");
        }
    }
}

/// Static split of servers into priority pools, proportional to how many
/// deflatable VMs each level has (largest remainder, every populated level
/// gets at least one server when there are enough servers).
inline std::vector<int> partition_labels(std::size_t servers, std::span<const VmRecord> vms, int levels)
{
    std::vector<std::size_t> count(static_cast<std::size_t>(std::max(levels, 1)), 0);
    for (const auto& vm : vms)
    {
        if (vm.deflatable && vm.priority_level >= 0 && vm.priority_level < levels)
        {
            ++count[static_cast<std::size_t>(vm.priority_level)];
        }
    }
    const std::size_t total = std::accumulate(count.begin(), count.end(), std::size_t{0});
    std::vector<std::size_t> share(count.size(), 0);
    if (total > 0)
    {
        std::size_t populated = 0;
        for (auto c : count) populated += c > 0 ? 1 : 0;
        std::size_t left = servers;
        if (servers >= populated)
        {
            for (std::size_t l = 0; l < count.size(); ++l)
            {
                if (count[l] > 0)
                {
                    share[l] = 1;
                    --left;
                }
            }
        }
        // apportion the rest by largest remainder of count * left / total
        std::vector<std::pair<std::size_t, std::size_t>> rem;
        std::size_t given = 0;
        for (std::size_t l = 0; l < count.size(); ++l)
        {
            const std::size_t q = count[l] * left / total;
            share[l] += q;
            given += q;
            rem.emplace_back(count[l] * left % total, l);
        }
        std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
        for (std::size_t k = 0; given < left && k < rem.size(); ++k, ++given)
        {
            ++share[rem[k].second];
        }
    }
    else
    {
        share[0] = servers;
    }
    std::vector<int> labels;
    for (std::size_t l = 0; l < share.size(); ++l)
    {
        for (std::size_t k = 0; k < share[l]; ++k)
        {
            labels.push_back(static_cast<int>(l));
        }
    }
    labels.resize(servers, 0);
    return labels;
}

/// Most recent sample at or before t (the first sample before the series starts).
inline double util_at(const VmRecord& vm, Seconds t)
{
    if (vm.util_series.empty())
    {
        return 0.0;
    }
    auto it = std::upper_bound(vm.util_series.begin(), vm.util_series.end(), t,
                               [](Seconds v, const UtilSample& s) { return v < s.t; });
    if (it == vm.util_series.begin())
    {
        return vm.util_series.front().cpu;
    }
    --it;
    return it->cpu;
}

/// Simulation state of one run.
class Simulation
{
public:
    Simulation(const ScenarioConfig& config, const Trace& trace)
        : config_(config), trace_(trace), vms_(trace.records)
    {
        check_config(config_, trace_);
        placement_.policy = config_.policy;
        placement_.order = config_.order;
        placement_.partitioned = config_.partitioned;
        placement_.deflation = config_.baseline == Baseline::deflation;

        const auto labels = partition_labels(config_.servers, vms_, config_.priority_levels);
        servers_.resize(config_.servers);
        for (std::size_t j = 0; j < servers_.size(); ++j)
        {
            servers_[j].id = static_cast<int>(j);
            servers_[j].capacity = config_.server_capacity;
            if (config_.partitioned)
            {
                servers_[j].partition = labels[j];
            }
        }
        outcomes_.resize(vms_.size());
        where_.assign(vms_.size(), -1);
        for (std::size_t i = 0; i < vms_.size(); ++i)
        {
            auto& o = outcomes_[i];
            o.id = vms_[i].id;
            o.deflatable = vms_[i].deflatable;
            o.priority = vms_[i].priority;
            o.max = vms_[i].max;
            o.start = o.end = vms_[i].arrival;
        }
        for (Resource r : all_resources)
        {
            total_capacity_[r] = config_.server_capacity[r] * static_cast<Units>(config_.servers);
        }
    }

    SimReport run()
    {
        enum Kind { departure = 0, arrival = 1, tick = 2 };
        std::vector<std::tuple<Seconds, int, std::size_t>> events;
        Seconds first = std::numeric_limits<Seconds>::max();
        Seconds last = std::numeric_limits<Seconds>::min();
        for (std::size_t i = 0; i < vms_.size(); ++i)
        {
            events.emplace_back(vms_[i].arrival, arrival, i);
            events.emplace_back(vms_[i].departure, departure, i);
            first = std::min(first, vms_[i].arrival);
            last = std::max(last, vms_[i].departure);
        }
        const Seconds step = trace_.meta.interval_s;
        if (!vms_.empty())
        {
            for (Seconds t = first; t < last; t += step)
            {
                events.emplace_back(t, tick, 0);
            }
        }
        std::sort(events.begin(), events.end());

        for (const auto& [t, kind, vm] : events)
        {
            switch (kind)
            {
                case arrival: on_arrival(vm, t); break;
                case departure: on_departure(vm, t); break;
                default: on_tick(t); break;
            }
            track_peak();
            if (config_.check_invariants)
            {
                check_invariants();
            }
        }
        return finish();
    }

private:
    Resident make_resident(std::size_t vm, Seconds t) const
    {
        const auto& rec = vms_[vm];
        Resident r;
        r.vm = vm;
        r.alloc = rec.max;
        r.floor = rec.deflatable ? allocation_floor(config_.policy, as_candidate(rec, rec.max)) : rec.max;
        if (config_.baseline == Baseline::preemption)
        {
            r.floor = rec.max;
        }
        r.mechanism = make_mechanism_state(rec.max, config_.hp_threshold_vcpus, rss(vm, t), config_.mem_block_mb);
        return r;
    }

    Units rss(std::size_t vm, Seconds t) const
    {
        const auto& rec = vms_[vm];
        return round_half_up(static_cast<long double>(util_at(rec, t)) *
                             static_cast<long double>(rec.max.mem));
    }

    void log(Seconds t, std::string kind, std::size_t vm, int server)
    {
        if (config_.record_events)
        {
            report_.events.push_back({t, std::move(kind), vms_[vm].id, server});
        }
    }

    /// Pushes changed allocations through the mechanism and the timelines.
    void sync(ServerState& server, Seconds t)
    {
        for (auto& r : server.residents)
        {
            if (effective_alloc(r.mechanism) != r.alloc)
            {
                r.mechanism = update_rss_threshold(r.mechanism, rss(r.vm, t));
                r.mechanism = deflate_hybrid(r.mechanism, r.alloc, config_.unplug_success);
            }
            auto& tl = outcomes_[r.vm].timeline;
            if (tl.empty() || tl.back().cpu != r.alloc.cpu || tl.back().mem != r.alloc.mem)
            {
                if (!tl.empty() && tl.back().t == t)
                {
                    tl.back() = {t, r.alloc.cpu, r.alloc.mem};
                }
                else
                {
                    tl.push_back({t, r.alloc.cpu, r.alloc.mem});
                }
            }
        }
    }

    void count_plan(const DeflationPlan& plan)
    {
        for (const auto& e : plan.per_vm)
        {
            if (plan.direction == PlanDirection::deflate)
                reclaimed_ += e.amount;
            else
                reinflated_ += e.amount;
        }
    }

    void commit(std::size_t vm, const PlacementDecision& d, Seconds t)
    {
        auto& server = servers_[*d.server];
        count_plan(d.plan);
        // the arriving VM enters at M, so its own share counts as reclaimed too
        admit(server, d, make_resident(vm, t));
        where_[vm] = static_cast<int>(*d.server);
        auto& o = outcomes_[vm];
        o.server = server.id;
        o.status = VmStatus::completed;
        o.start = t;
        sync(server, t);
        log(t, "place", vm, server.id);
    }

    /// Deflatable residents in preemption order: lowest priority first,
    /// then the largest reclaim, then id.
    std::vector<std::size_t> preemption_order(const ServerState& server) const
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < server.residents.size(); ++i)
        {
            if (vms_[server.residents[i].vm].deflatable) idx.push_back(i);
        }
        auto weight = [&](std::size_t i) {
            double w = 0.0;
            for (Resource r : all_resources)
            {
                if (server.capacity[r] > 0)
                    w += static_cast<double>(server.residents[i].alloc[r]) / static_cast<double>(server.capacity[r]);
            }
            return w;
        };
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const auto& va = vms_[server.residents[a].vm];
            const auto& vb = vms_[server.residents[b].vm];
            if (va.priority != vb.priority) return va.priority < vb.priority;
            const double wa = weight(a), wb = weight(b);
            if (wa != wb) return wa > wb;
            return va.id < vb.id;
        });
        return idx;
    }

    /// Smallest prefix of the preemption order after which \a vm can be
    /// placed on \a server; empty optional when even preempting every
    /// deflatable resident is not enough.
    std::optional<std::vector<std::size_t>> preemption_victims(const ServerState& server, std::size_t vm) const
    {
        const auto order = preemption_order(server);
        ServerState trial = server;
        std::vector<std::size_t> victim_vms;
        for (std::size_t k = 0; k <= order.size(); ++k)
        {
            if (k > 0)
            {
                victim_vms.push_back(server.residents[order[k - 1]].vm);
                evict(trial, victim_vms.back());
            }
            if (!try_server(vm, vms_, trial, 0, placement_).rejected())
            {
                return victim_vms;
            }
        }
        return std::nullopt;
    }

    void preempt(ServerState& server, std::size_t vm, Seconds t)
    {
        const Resident r = evict(server, vm);
        written_off_ += r.mechanism.max - r.alloc;
        where_[vm] = -1;
        auto& o = outcomes_[vm];
        o.status = VmStatus::preempted;
        o.end = t;
        ++report_.preempted_count;
        ++report_.failure_count;
        log(t, "preempt", vm, server.id);
    }

    void on_arrival(std::size_t vm, Seconds t)
    {
        const auto& rec = vms_[vm];
        auto d = place(vm, vms_, servers_, placement_);
        if (!d.rejected())
        {
            if (!needed_reclaim(servers_[*d.server], rec.max).is_zero())
            {
                ++report_.pressure_events;
            }
            commit(vm, d, t);
            return;
        }

        ++report_.pressure_events;
        if (!rec.deflatable)
        {
            // on-demand demand has to be met: preempt deflatable VMs on the
            // best-ranked server where that is enough
            for (std::size_t j : rank_servers(rec, servers_, placement_))
            {
                const auto victims = preemption_victims(servers_[j], vm);
                if (!victims)
                {
                    continue;
                }
                for (std::size_t v : *victims)
                {
                    preempt(servers_[j], v, t);
                }
                auto fit = try_server(vm, vms_, servers_[j], j, placement_);
                commit(vm, fit, t);
                return;
            }
            ++report_.rejected_on_demand;
        }
        else
        {
            ++report_.rejected_deflatable;
            ++report_.failure_count;
        }
        outcomes_[vm].status = VmStatus::rejected;
        log(t, "reject", vm, -1);
    }

    void on_departure(std::size_t vm, Seconds t)
    {
        if (where_[vm] < 0)
        {
            return;
        }
        auto& server = servers_[static_cast<std::size_t>(where_[vm])];
        const Resident r = evict(server, vm);
        written_off_ += r.mechanism.max - r.alloc;
        where_[vm] = -1;
        outcomes_[vm].end = t;
        log(t, "depart", vm, server.id);

        if (config_.baseline == Baseline::deflation)
        {
            auto [pool, targets] = deflation_pool(server, vms_, std::nullopt);
            const ResourceVector freed = positive_part(server.capacity, server.used);
            if (!pool.empty() && !freed.is_zero())
            {
                const auto plan = reinflate(config_.policy, pool, freed);
                if (!plan.total().is_zero())
                {
                    count_plan(plan);
                    apply_plan(server, plan, targets);
                    sync(server, t);
                    log(t, "reinflate", vm, server.id);
                }
            }
        }
    }

    void on_tick(Seconds t)
    {
        for (auto& server : servers_)
        {
            for (auto& r : server.residents)
            {
                r.mechanism = update_rss_threshold(r.mechanism, rss(r.vm, t));
            }
        }
    }

    /// Peak committed ratio over the run.
    void track_peak()
    {
        ResourceVector committed;
        for (const auto& s : servers_) committed += s.committed;
        for (Resource r : {Resource::cpu, Resource::mem})
        {
            if (total_capacity_[r] > 0)
            {
                report_.overcommitment =
                    std::max(report_.overcommitment,
                             static_cast<double>(committed[r]) / static_cast<double>(total_capacity_[r]));
            }
        }
    }

    void check_invariants() const
    {
        ResourceVector deficit;
        for (const auto& s : servers_)
        {
            ResourceVector used, committed;
            for (const auto& r : s.residents)
            {
                const auto& rec = vms_[r.vm];
                if (!dominates(r.alloc, r.floor) || !dominates(rec.max, r.alloc))
                {
                    throw std::logic_error("allocation of '" + rec.id + "' left [floor, M]");
                }
                if (effective_alloc(r.mechanism) != r.alloc)
                {
                    throw std::logic_error("mechanism out of sync for '" + rec.id + "'");
                }
                used += r.alloc;
                committed += rec.max;
                deficit += rec.max - r.alloc;
            }
            if (used != s.used || committed != s.committed)
            {
                throw std::logic_error("server bookkeeping drifted");
            }
            if (!dominates(s.capacity, s.used))
            {
                throw std::logic_error("server capacity exceeded");
            }
        }
        if (reclaimed_ - reinflated_ - written_off_ != deficit)
        {
            throw std::logic_error("reclaim accounting does not close");
        }
    }

    SimReport finish()
    {
        SimReport& rep = report_;
        rep.config = config_;
        rep.servers = config_.servers;
        rep.vm_count = vms_.size();
        double demand = 0.0, under = 0.0;
        for (std::size_t i = 0; i < vms_.size(); ++i)
        {
            auto& o = outcomes_[i];
            if (vms_[i].deflatable) ++rep.deflatable_count;
            if (o.status == VmStatus::completed && where_[i] >= 0)
            {
                o.end = vms_[i].departure; // still running at the end of the trace
            }
            if (o.status != VmStatus::rejected)
            {
                const auto tot = integrate_underallocation(vms_[i], o.timeline, o.start, o.end, trace_.meta.interval_s);
                o.demand_mcore_s = tot.demand;
                o.underalloc_mcore_s = tot.underalloc;
                o.throughput_loss = tot.loss();
                o.alloc_fraction_s = tot.alloc_fraction_s;
                if (o.deflatable)
                {
                    demand += tot.demand;
                    under += tot.underalloc;
                }
            }
            o.bill = bill(o, config_.pricing);
        }
        rep.failure_probability =
            rep.deflatable_count > 0 ? static_cast<double>(rep.failure_count) / static_cast<double>(rep.deflatable_count)
                                     : 0.0;
        rep.throughput_loss = demand > 0.0 ? under / demand : 0.0;
        rep.vms = std::move(outcomes_);
        return std::move(rep);
    }

    const ScenarioConfig& config_;
    const Trace& trace_;
    std::span<const VmRecord> vms_;
    PlacementConfig placement_;
    std::vector<ServerState> servers_;
    std::vector<VmOutcome> outcomes_;
    std::vector<int> where_;
    ResourceVector total_capacity_;
    ResourceVector reclaimed_, reinflated_, written_off_;
    SimReport report_;
};

inline double reference_revenue(const Trace& trace, const PricingConfig& pricing)
{
    double total = 0.0;
    for (const auto& vm : trace.records)
    {
        total += full_allocation_bill(vm, pricing);
    }
    return total;
}

inline SimReport run_fixed(const ScenarioConfig& config, const Trace& trace, std::size_t reference_servers)
{
    SimReport rep = Simulation(config, trace).run();
    rep.reference_servers = reference_servers;
    rep.cluster_overcommitment =
        reference_servers > 0 ? static_cast<double>(reference_servers) / static_cast<double>(rep.servers) - 1.0 : 0.0;
    rep.revenue = revenue(rep, config.pricing, reference_revenue(trace, config.pricing));
    return rep;
}

} // namespace detail

/**
 * Smallest server count on which the trace runs with deflation disabled and
 * without any preemption or rejection.
 *
 * Throws InfeasibleConfig when a VM cannot fit on an empty server.
 */
inline std::size_t minimal_cluster_size(const ScenarioConfig& config, const Trace& trace)
{
    ScenarioConfig probe = config;
    probe.baseline = Baseline::preemption;
    probe.record_events = false;
    probe.check_invariants = false;
    auto clean = [&](std::size_t n) {
        probe.servers = n;
        const SimReport r = detail::Simulation(probe, trace).run();
        return r.failure_count == 0 && r.rejected_on_demand == 0;
    };
    probe.servers = 1;
    detail::check_config(probe, trace);
    if (trace.records.empty())
    {
        return 1;
    }
    std::size_t hi = 1;
    while (!clean(hi))
    {
        if (hi > trace.records.size())
        {
            throw InfeasibleConfig("no cluster size runs the trace without preemptions");
        }
        hi *= 2;
    }
    std::size_t lo = hi / 2; // known not clean, or 0
    while (hi - lo > 1)
    {
        const std::size_t mid = lo + (hi - lo) / 2;
        (clean(mid) ? hi : lo) = mid;
    }
    return hi;
}

/// Runs one scenario on an already prepared trace.
inline SimReport run(const ScenarioConfig& config, const Trace& trace)
{
    const std::size_t reference =
        config.reference_servers ? *config.reference_servers : minimal_cluster_size(config, trace);
    return detail::run_fixed(config, trace, reference);
}

/// Loads the trace named by \a config and runs it.
inline SimReport run(const ScenarioConfig& config)
{
    const Trace trace = prepare_trace(config);
    return run(config, trace);
}

/// Same replay with preemption instead of deflation.
inline SimReport preemption_baseline(ScenarioConfig config, const Trace& trace)
{
    config.baseline = Baseline::preemption;
    return run(config, trace);
}

/**
 * One run per server count on the same trace. The reference cluster size is
 * computed once. Runs are independent and may execute on up to \a jobs
 * threads; results come back in the order of \a server_counts.
 */
inline std::vector<SimReport> sweep_overcommitment(const ScenarioConfig& base, const Trace& trace,
                                                   std::span<const std::size_t> server_counts, unsigned jobs = 1)
{
    ScenarioConfig config = base;
    if (!config.reference_servers)
    {
        config.reference_servers = minimal_cluster_size(config, trace);
    }
    std::vector<SimReport> out(server_counts.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < server_counts.size(); k = next++)
        {
            try
            {
                ScenarioConfig c = config;
                c.servers = server_counts[k];
                out[k] = detail::run_fixed(c, trace, *c.reference_servers);
            }
            catch (...)
            {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(server_counts.size())));
    if (jobs == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }
    return out;
}

/**
 * Reads a scenario from a flat key=value file. Trace paths are taken
 * relative to \a base_dir (normally the directory of the file).
 *
 * Keys: servers, server_cpu_mcores, server_mem_mb, policy,
 * deterministic_order, partitioned, baseline, pricing, static_rate,
 * allocation_rate, seed, trace_dir | synthetic_spec, sample_count,
 * priority_levels, min_alloc_fraction, hp_threshold_vcpus, mem_block_mb,
 * unplug_success, reference_servers, record_events.
 */
inline ScenarioConfig parse_scenario(const KeyValueFile& kv, const std::filesystem::path& base_dir)
{
    ScenarioConfig c;
    c.servers = kv.number<std::size_t>("servers", c.servers);
    c.server_capacity.cpu = kv.number<Units>("server_cpu_mcores", c.server_capacity.cpu);
    c.server_capacity.mem = kv.number<Units>("server_mem_mb", c.server_capacity.mem);
    c.policy = parse_policy_kind(kv.get("policy", std::string(to_string(c.policy))));
    c.order = parse_deterministic_order(kv.get("deterministic_order", std::string(to_string(c.order))));
    c.partitioned = kv.flag("partitioned", c.partitioned);
    c.baseline = parse_baseline(kv.get("baseline", std::string(to_string(c.baseline))));
    c.pricing.scheme = parse_pricing(kv.get("pricing", std::string(to_string(c.pricing.scheme))));
    c.pricing.static_rate = kv.number<double>("static_rate", c.pricing.static_rate);
    c.pricing.allocation_rate = kv.number<double>("allocation_rate", c.pricing.allocation_rate);
    c.seed = kv.number<std::uint64_t>("seed", c.seed);
    if (kv.has("trace_dir") && kv.has("synthetic_spec"))
    {
        throw InputError(kv.source() + ": set only one of trace_dir and synthetic_spec");
    }
    if (kv.has("trace_dir"))
    {
        c.trace_dir = base_dir / kv.get("trace_dir", "");
    }
    if (kv.has("synthetic_spec"))
    {
        c.synthetic_spec = base_dir / kv.get("synthetic_spec", "");
    }
    if (kv.has("sample_count"))
    {
        c.sample_count = kv.number<std::size_t>("sample_count", 0);
    }
    c.priority_levels = kv.number<int>("priority_levels", c.priority_levels);
    c.min_alloc_fraction = kv.number<double>("min_alloc_fraction", c.min_alloc_fraction);
    c.hp_threshold_vcpus = kv.number<Units>("hp_threshold_vcpus", c.hp_threshold_vcpus);
    c.mem_block_mb = kv.number<Units>("mem_block_mb", c.mem_block_mb);
    c.unplug_success = kv.number<double>("unplug_success", c.unplug_success);
    if (kv.has("reference_servers"))
    {
        c.reference_servers = kv.number<std::size_t>("reference_servers", 0);
    }
    c.record_events = kv.flag("record_events", c.record_events);
    kv.reject_unknown();

    if (c.servers < 1)
    {
        throw InputError(kv.source() + ": servers must be >= 1");
    }
    if (c.priority_levels < 1)
    {
        throw InputError(kv.source() + ": priority_levels must be >= 1");
    }
    if (!(c.min_alloc_fraction >= 0.0 && c.min_alloc_fraction <= 1.0))
    {
        throw InputError(kv.source() + ": min_alloc_fraction must lie in [0,1]");
    }
    return c;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path)
{
    const auto kv = KeyValueFile::load(path.string());
    return parse_scenario(kv, path.parent_path());
}

} // namespace vmdeflate

#endif // VMDEFLATE_ENGINE_HPP
