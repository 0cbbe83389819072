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
 * \file vmdeflate/trace.hpp
 *
 * \brief VM traces: on-disk format, sampling, synthetic workloads and the
 *  per-VM metadata (deflatability, priority) derived from them.
 *
 * A trace directory holds three files:
 *
 *   vms.csv    vm_id,arrival_s,departure_s,cpu_mcores,mem_mb,class
 *   util.csv   vm_id,t_s,cpu_util
 *   meta.txt   interval_s=300
 *
 * class is one of interactive, delay, unknown. cpu_util is the CPU
 * utilization as a fraction of the VM's own size, one row per interval.
 *
 * Converting the public Azure VM dataset: take vmId, vmcreated, vmdeleted,
 * vmcorecountbucket*1000, vmmemorybucket*1024 and vmcategory (Delay-insensitive
 * maps to delay) from the vmtable, and the max-CPU column of the readings
 * divided by 100, rebased so timestamps start at 0.
 */

#ifndef VMDEFLATE_TRACE_HPP
#define VMDEFLATE_TRACE_HPP

#include <vmdeflate/config.hpp>
#include <vmdeflate/resources.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace vmdeflate {

using Seconds = std::int64_t;

inline constexpr Seconds default_interval_s = 300;

enum class WorkloadClass { interactive, delay_insensitive, unknown };

inline std::string_view to_string(WorkloadClass c)
{
    switch (c)
    {
        case WorkloadClass::interactive: return "interactive";
        case WorkloadClass::delay_insensitive: return "delay";
        case WorkloadClass::unknown: return "unknown";
    }
    return "unknown";
}

inline std::optional<WorkloadClass> parse_workload_class(std::string_view s)
{
    if (s == "interactive") return WorkloadClass::interactive;
    if (s == "delay" || s == "delay_insensitive") return WorkloadClass::delay_insensitive;
    if (s == "unknown") return WorkloadClass::unknown;
    return std::nullopt;
}

struct UtilSample
{
    Seconds t = 0;
    double cpu = 0.0;

    friend bool operator==(const UtilSample&, const UtilSample&) = default;
};

struct VmRecord
{
    std::string id;
    Seconds arrival = 0;
    Seconds departure = 0;
    ResourceVector max;                   ///< M
    ResourceVector min;                   ///< m, component-wise <= M
    double priority = 0.0;                ///< in (0,1) when deflatable
    int priority_level = -1;              ///< bucket index, -1 when unassigned
    bool deflatable = false;
    WorkloadClass workload_class = WorkloadClass::unknown;
    std::vector<UtilSample> util_series;  ///< CPU utilization, fraction of M.cpu

    Seconds lifetime() const { return departure - arrival; }
};

struct TraceMeta
{
    Seconds interval_s = default_interval_s;
    std::size_t vm_count = 0;
    std::string cpu_units = "millicores";
    std::string mem_units = "MB";
};

struct Trace
{
    TraceMeta meta;
    std::vector<VmRecord> records;
};

class TraceError : public InputError
{
public:
    using InputError::InputError;
};

struct Sampling
{
    std::size_t count = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string where(const std::filesystem::path& file, std::size_t line)
{
    return file.filename().string() + ":" + std::to_string(line) + ": ";
}

template <typename T>
T field(std::string_view s, const std::filesystem::path& file, std::size_t line, std::string_view what)
{
    try
    {
        return parse_number<T>(s, what);
    }
    catch (const InputError& e)
    {
        throw TraceError(where(file, line) + e.what());
    }
}

inline void expect_header(std::istream& in, const std::filesystem::path& file, std::string_view header)
{
    std::string line;
    if (!std::getline(in, line) || trim(line) != header)
    {
        throw TraceError(where(file, 1) + "expected header '" + std::string(header) + "'");
    }
}

inline std::ifstream open_or_throw(const std::filesystem::path& p)
{
    std::ifstream in(p);
    if (!in)
    {
        throw TraceError("cannot open '" + p.string() + "'");
    }
    return in;
}

} // namespace detail

inline constexpr std::string_view vms_header = "vm_id,arrival_s,departure_s,cpu_mcores,mem_mb,class";
inline constexpr std::string_view util_header = "vm_id,t_s,cpu_util";

/**
 * Loads a trace directory. With \a sampling, keeps a uniform random subset
 * of `count` VMs chosen by `seed` (file order preserved); a count at or
 * above the population keeps every VM.
 *
 * Throws TraceError naming the file and line of a malformed row, or the VM
 * whose utilization timestamps are out of order.
 */
inline Trace load_trace(const std::filesystem::path& dir, std::optional<Sampling> sampling = std::nullopt)
{
    Trace trace;

    const auto meta_path = dir / "meta.txt";
    if (std::filesystem::exists(meta_path))
    {
        const auto kv = KeyValueFile::load(meta_path.string());
        trace.meta.interval_s = kv.number<Seconds>("interval_s", default_interval_s);
        trace.meta.cpu_units = kv.get("cpu_units", trace.meta.cpu_units);
        trace.meta.mem_units = kv.get("mem_units", trace.meta.mem_units);
        kv.get("vm_count", "");
        kv.reject_unknown();
        if (trace.meta.interval_s <= 0)
        {
            throw TraceError("meta.txt: interval_s must be positive");
        }
    }

    const auto vms_path = dir / "vms.csv";
    {
        auto in = detail::open_or_throw(vms_path);
        detail::expect_header(in, vms_path, vms_header);
        std::string line;
        std::size_t lineno = 1;
        std::unordered_map<std::string, std::size_t> seen;
        while (std::getline(in, line))
        {
            ++lineno;
            if (trim(line).empty())
            {
                continue;
            }
            const auto cols = split(line, ',');
            if (cols.size() != 6)
            {
                throw TraceError(detail::where(vms_path, lineno) + "expected 6 columns, got " +
                                 std::to_string(cols.size()));
            }
            VmRecord vm;
            vm.id = std::string(cols[0]);
            if (vm.id.empty())
            {
                throw TraceError(detail::where(vms_path, lineno) + "empty vm_id");
            }
            vm.arrival = detail::field<Seconds>(cols[1], vms_path, lineno, "arrival_s");
            vm.departure = detail::field<Seconds>(cols[2], vms_path, lineno, "departure_s");
            vm.max.cpu = detail::field<Units>(cols[3], vms_path, lineno, "cpu_mcores");
            vm.max.mem = detail::field<Units>(cols[4], vms_path, lineno, "mem_mb");
            const auto cls = parse_workload_class(cols[5]);
            if (!cls)
            {
                throw TraceError(detail::where(vms_path, lineno) + "unknown class '" + std::string(cols[5]) + "'");
            }
            vm.workload_class = *cls;
            if (vm.arrival >= vm.departure)
            {
                throw TraceError(detail::where(vms_path, lineno) + "arrival_s must precede departure_s");
            }
            if (vm.max.cpu < 0 || vm.max.mem < 0)
            {
                throw TraceError(detail::where(vms_path, lineno) + "negative size");
            }
            if (!seen.emplace(vm.id, lineno).second)
            {
                throw TraceError(detail::where(vms_path, lineno) + "duplicate vm_id '" + vm.id + "'");
            }
            trace.records.push_back(std::move(vm));
        }
    }

    if (sampling && sampling->count < trace.records.size())
    {
        std::vector<std::size_t> all(trace.records.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> picked;
        picked.reserve(sampling->count);
        std::mt19937_64 rng(sampling->seed);
        std::sample(all.begin(), all.end(), std::back_inserter(picked), sampling->count, rng);
        std::vector<VmRecord> kept;
        kept.reserve(picked.size());
        for (std::size_t i : picked)
        {
            kept.push_back(std::move(trace.records[i]));
        }
        trace.records = std::move(kept);
    }

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < trace.records.size(); ++i)
    {
        index.emplace(trace.records[i].id, i);
    }

    const auto util_path = dir / "util.csv";
    if (std::filesystem::exists(util_path))
    {
        auto in = detail::open_or_throw(util_path);
        detail::expect_header(in, util_path, util_header);
        std::string line;
        std::size_t lineno = 1;
        while (std::getline(in, line))
        {
            ++lineno;
            if (trim(line).empty())
            {
                continue;
            }
            const auto cols = split(line, ',');
            if (cols.size() != 3)
            {
                throw TraceError(detail::where(util_path, lineno) + "expected 3 columns, got " +
                                 std::to_string(cols.size()));
            }
            const UtilSample s{detail::field<Seconds>(cols[1], util_path, lineno, "t_s"),
                               detail::field<double>(cols[2], util_path, lineno, "cpu_util")};
            if (!(s.cpu >= 0.0 && s.cpu <= 1.0))
            {
                throw TraceError(detail::where(util_path, lineno) + "cpu_util outside [0,1]");
            }
            const auto it = index.find(std::string(cols[0]));
            if (it == index.end())
            {
                if (sampling)
                {
                    continue; // VM not in the sample
                }
                throw TraceError(detail::where(util_path, lineno) + "unknown vm_id '" + std::string(cols[0]) + "'");
            }
            auto& series = trace.records[it->second].util_series;
            if (!series.empty())
            {
                if (s.t <= series.back().t)
                {
                    throw TraceError("util.csv: timestamps out of order for vm '" + std::string(cols[0]) + "'");
                }
                if (s.t - series.back().t != trace.meta.interval_s)
                {
                    throw TraceError("util.csv: samples of vm '" + std::string(cols[0]) +
                                     "' are not spaced at interval_s");
                }
            }
            series.push_back(s);
        }
    }

    trace.meta.vm_count = trace.records.size();
    return trace;
}

/// Writes \a trace in the directory format read by load_trace().
inline void save_trace(const std::filesystem::path& dir, const Trace& trace)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream meta(dir / "meta.txt");
        meta << "interval_s=" << trace.meta.interval_s << '\n'
             << "vm_count=" << trace.records.size() << '\n'
             << "cpu_units=" << trace.meta.cpu_units << '\n'
             << "mem_units=" << trace.meta.mem_units << '\n';
    }
    std::ofstream vms(dir / "vms.csv");
    std::ofstream util(dir / "util.csv");
    vms << vms_header << '\n';
    util << util_header << '\n';
    for (const auto& vm : trace.records)
    {
        vms << vm.id << ',' << vm.arrival << ',' << vm.departure << ',' << vm.max.cpu << ',' << vm.max.mem << ','
            << to_string(vm.workload_class) << '\n';
        for (const auto& s : vm.util_series)
        {
            util << vm.id << ',' << s.t << ',' << format_double(s.cpu) << '\n';
        }
    }
    if (!vms || !util)
    {
        throw TraceError("failed writing trace to '" + dir.string() + "'");
    }
}

/// Nearest-rank percentile: the ceil(p*n)-th smallest value.
inline double percentile_nearest_rank(std::vector<double> values, double p)
{
    if (values.empty())
    {
        throw std::invalid_argument("percentile of an empty series");
    }
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

inline double p95_cpu(const VmRecord& vm)
{
    if (vm.util_series.empty())
    {
        throw std::invalid_argument("VM '" + vm.id + "' has an empty utilization series");
    }
    std::vector<double> v;
    v.reserve(vm.util_series.size());
    for (const auto& s : vm.util_series)
    {
        v.push_back(s.cpu);
    }
    return percentile_nearest_rank(std::move(v), 0.95);
}

/// Interactive VMs are deflatable; delay-insensitive and unknown VMs are
/// treated as on-demand.
inline void mark_deflatable(std::vector<VmRecord>& records)
{
    for (auto& vm : records)
    {
        vm.deflatable = vm.workload_class == WorkloadClass::interactive;
    }
}

/// Priority of bucket \a level out of \a levels: evenly spaced in (0,1).
inline double priority_for_level(int level, int levels)
{
    return static_cast<double>(level + 1) / static_cast<double>(levels + 1);
}

/**
 * Buckets deflatable VMs by the rank of their p95 CPU utilization into
 * `levels` groups of equal population and gives bucket k the priority
 * (k+1)/(levels+1). Higher p95 means higher priority. VMs with equal p95
 * share the bucket of the lowest rank among them.
 *
 * Throws std::invalid_argument for an empty utilization series.
 */
inline void assign_priorities(std::vector<VmRecord>& records, int levels = 4)
{
    if (levels < 1)
    {
        throw std::invalid_argument("priority levels must be >= 1");
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < records.size(); ++i)
    {
        const double p95 = p95_cpu(records[i]);
        if (records[i].deflatable)
        {
            ranked.emplace_back(p95, i);
        }
    }
    std::sort(ranked.begin(), ranked.end());
    const std::size_t n = ranked.size();
    std::size_t tie_rank = 0;
    for (std::size_t r = 0; r < n; ++r)
    {
        if (r == 0 || ranked[r].first != ranked[r - 1].first)
        {
            tie_rank = r;
        }
        const int level = static_cast<int>(tie_rank * static_cast<std::size_t>(levels) / n);
        auto& vm = records[ranked[r].second];
        vm.priority_level = level;
        vm.priority = priority_for_level(level, levels);
    }
}

/// Sets m = f * M (rounded half up) on every record.
inline void set_min_fraction(std::vector<VmRecord>& records, double fraction)
{
    if (!(fraction >= 0.0 && fraction <= 1.0))
    {
        throw std::invalid_argument("minimum allocation fraction must lie in [0,1]");
    }
    for (auto& vm : records)
    {
        vm.min = scale(vm.max, fraction);
    }
}

// ---------------------------------------------------------------------------
// Synthetic workloads

struct ConstantUtil
{
    double level = 0.3;
};

struct SinusoidUtil
{
    double mean = 0.5;
    double amplitude = 0.2;
    Seconds period_s = 3600;
};

struct BurstyUtil
{
    double base = 0.1;
    double peak = 0.9;
    double duty_cycle = 0.1;
};

using UtilizationModel = std::variant<ConstantUtil, SinusoidUtil, BurstyUtil>;

struct VmSize
{
    Units cpu = 0;
    Units mem = 0;
    double weight = 1.0;
};

struct SyntheticSpec
{
    std::size_t vm_count = 100;
    Seconds duration_s = 86400;
    Seconds interval_s = default_interval_s;
    std::vector<VmSize> sizes{{2000, 4096, 1.0}};
    UtilizationModel utilization = ConstantUtil{};
    /// Per-VM offset of the mean (or constant/base) level, uniform in +-jitter.
    double mean_jitter = 0.0;
    double interactive_share = 1.0;
    double delay_share = 0.0;
    double unknown_share = 0.0;
    /// Mean of the exponential lifetime; 0 keeps every VM for the whole run.
    Seconds lifetime_mean_s = 0;
    /// All VMs arrive at t=0 when true, otherwise uniformly over the run.
    bool arrive_at_start = false;
    std::uint64_t seed = 1;
};

inline UtilizationModel parse_utilization_model(std::string_view s)
{
    const auto colon = s.find(':');
    const auto name = trim(s.substr(0, colon));
    std::vector<double> args;
    if (colon != std::string_view::npos)
    {
        for (auto part : split(s.substr(colon + 1), ','))
        {
            args.push_back(parse_number<double>(part, "utilization model argument"));
        }
    }
    auto want = [&](std::size_t n) {
        if (args.size() != n)
        {
            throw InputError("utilization model '" + std::string(name) + "' takes " + std::to_string(n) +
                             " arguments");
        }
    };
    if (name == "constant")
    {
        want(1);
        return ConstantUtil{args[0]};
    }
    if (name == "sinusoid")
    {
        want(3);
        return SinusoidUtil{args[0], args[1], static_cast<Seconds>(args[2])};
    }
    if (name == "bursty")
    {
        want(3);
        return BurstyUtil{args[0], args[1], args[2]};
    }
    throw InputError("unknown utilization model '" + std::string(name) + "'");
}

inline void validate(const SyntheticSpec& spec)
{
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (spec.duration_s <= 0 || spec.interval_s <= 0)
    {
        throw InputError("duration_s and interval_s must be positive");
    }
    if (spec.sizes.empty())
    {
        throw InputError("at least one VM size is required");
    }
    for (const auto& s : spec.sizes)
    {
        if (s.cpu <= 0 || s.mem < 0 || !(s.weight > 0.0))
        {
            throw InputError("VM sizes need positive cpu, non-negative mem and positive weight");
        }
    }
    if (!(spec.interactive_share >= 0 && spec.delay_share >= 0 && spec.unknown_share >= 0) ||
        spec.interactive_share + spec.delay_share + spec.unknown_share <= 0)
    {
        throw InputError("class mix must be non-negative and not all zero");
    }
    if (!(spec.mean_jitter >= 0.0) || spec.lifetime_mean_s < 0)
    {
        throw InputError("mean_jitter and lifetime_mean_s must be non-negative");
    }
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, ConstantUtil>)
            {
                if (!unit(m.level)) throw InputError("constant level must lie in [0,1]");
            }
            else if constexpr (std::is_same_v<M, SinusoidUtil>)
            {
                if (!unit(m.mean) || !(m.amplitude >= 0.0) || m.period_s <= 0)
                    throw InputError("sinusoid needs mean in [0,1], amplitude >= 0, period > 0");
            }
            else
            {
                if (!unit(m.base) || !unit(m.peak) || !unit(m.duty_cycle) || m.base > m.peak)
                    throw InputError("bursty needs 0 <= base <= peak <= 1 and duty_cycle in [0,1]");
            }
        },
        spec.utilization);
}

/// Reads a synthetic workload description (flat key=value).
inline SyntheticSpec parse_synthetic_spec(const KeyValueFile& kv)
{
    SyntheticSpec spec;
    spec.vm_count = kv.number<std::size_t>("vm_count", spec.vm_count);
    spec.duration_s = kv.number<Seconds>("duration_s", spec.duration_s);
    spec.interval_s = kv.number<Seconds>("interval_s", spec.interval_s);
    if (kv.has("sizes"))
    {
        spec.sizes.clear();
        const std::string text = kv.get("sizes", "");
        for (auto item : split(text, ','))
        {
            // CPUxMEM[:weight]
            const auto colon = item.find(':');
            const auto dims = item.substr(0, colon);
            const auto x = dims.find('x');
            if (x == std::string_view::npos)
            {
                throw InputError(kv.source() + ": sizes entries look like 2000x4096:0.5");
            }
            VmSize sz;
            sz.cpu = parse_number<Units>(dims.substr(0, x), "size cpu");
            sz.mem = parse_number<Units>(dims.substr(x + 1), "size mem");
            sz.weight = colon == std::string_view::npos ? 1.0 : parse_number<double>(item.substr(colon + 1), "size weight");
            spec.sizes.push_back(sz);
        }
    }
    if (kv.has("util_model"))
    {
        spec.utilization = parse_utilization_model(kv.get("util_model", ""));
    }
    spec.mean_jitter = kv.number<double>("mean_jitter", spec.mean_jitter);
    if (kv.has("class_mix"))
    {
        spec.interactive_share = spec.delay_share = spec.unknown_share = 0.0;
        const std::string text = kv.get("class_mix", "");
        for (auto item : split(text, ','))
        {
            const auto colon = item.find(':');
            if (colon == std::string_view::npos)
            {
                throw InputError(kv.source() + ": class_mix entries look like interactive:0.5");
            }
            const auto cls = parse_workload_class(trim(item.substr(0, colon)));
            if (!cls)
            {
                throw InputError(kv.source() + ": unknown class in class_mix");
            }
            const double w = parse_number<double>(item.substr(colon + 1), "class weight");
            switch (*cls)
            {
                case WorkloadClass::interactive: spec.interactive_share = w; break;
                case WorkloadClass::delay_insensitive: spec.delay_share = w; break;
                case WorkloadClass::unknown: spec.unknown_share = w; break;
            }
        }
    }
    spec.lifetime_mean_s = kv.number<Seconds>("lifetime_mean_s", spec.lifetime_mean_s);
    spec.arrive_at_start = kv.flag("arrive_at_start", spec.arrive_at_start);
    spec.seed = kv.number<std::uint64_t>("seed", spec.seed);
    kv.reject_unknown();
    validate(spec);
    return spec;
}

/// Deterministic synthetic trace: identical spec and seed give identical output.
inline Trace gen_synthetic(const SyntheticSpec& spec)
{
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> size_weights;
    for (const auto& s : spec.sizes)
    {
        size_weights.push_back(s.weight);
    }
    std::discrete_distribution<std::size_t> pick_size(size_weights.begin(), size_weights.end());
    std::discrete_distribution<int> pick_class({spec.interactive_share, spec.delay_share, spec.unknown_share});

    const Seconds slots = std::max<Seconds>(1, spec.duration_s / spec.interval_s);
    Trace trace;
    trace.meta.interval_s = spec.interval_s;

    const int width = static_cast<int>(std::to_string(spec.vm_count).size());
    for (std::size_t i = 0; i < spec.vm_count; ++i)
    {
        VmRecord vm;
        std::string num = std::to_string(i);
        vm.id = "vm" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;

        const auto& size = spec.sizes[pick_size(rng)];
        vm.max.cpu = size.cpu;
        vm.max.mem = size.mem;
        vm.workload_class = static_cast<WorkloadClass>(pick_class(rng));

        const Seconds start_slot =
            spec.arrive_at_start ? 0 : std::uniform_int_distribution<Seconds>(0, slots - 1)(rng);
        Seconds life_slots = slots - start_slot;
        if (spec.lifetime_mean_s > 0)
        {
            std::exponential_distribution<double> life(1.0 / static_cast<double>(spec.lifetime_mean_s));
            const auto drawn = static_cast<Seconds>(std::ceil(life(rng) / static_cast<double>(spec.interval_s)));
            life_slots = std::clamp<Seconds>(drawn, 1, slots - start_slot);
        }
        vm.arrival = start_slot * spec.interval_s;
        vm.departure = (start_slot + life_slots) * spec.interval_s;

        const double jitter = spec.mean_jitter > 0.0 ? (2.0 * unit(rng) - 1.0) * spec.mean_jitter : 0.0;
        const double phase = 2.0 * std::numbers::pi * unit(rng);
        for (Seconds k = 0; k < life_slots; ++k)
        {
            const Seconds t = vm.arrival + k * spec.interval_s;
            double u = std::visit(
                [&](const auto& m) -> double {
                    using M = std::decay_t<decltype(m)>;
                    if constexpr (std::is_same_v<M, ConstantUtil>)
                    {
                        return m.level + jitter;
                    }
                    else if constexpr (std::is_same_v<M, SinusoidUtil>)
                    {
                        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) /
                                                 static_cast<double>(m.period_s) + phase;
                        return m.mean + jitter + m.amplitude * std::sin(angle);
                    }
                    else
                    {
                        return unit(rng) < m.duty_cycle ? m.peak : m.base + jitter;
                    }
                },
                spec.utilization);
            vm.util_series.push_back({t, std::clamp(u, 0.0, 1.0)});
        }
        trace.records.push_back(std::move(vm));
    }
    trace.meta.vm_count = trace.records.size();
    return trace;
}

} // namespace vmdeflate

#endif // VMDEFLATE_TRACE_HPP
