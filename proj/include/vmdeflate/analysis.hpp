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
 * \file vmdeflate/analysis.hpp
 *
 * \brief Offline deflatability analytics over utilization traces.
 *
 * How often would a VM have wanted more than it got had it been deflated by
 * d? Computed per entity, then summarized as min/quartiles/max per deflation
 * level and group. Also holds a small piecewise performance model and the
 * load-balancer weight rule for deflated replicas.
 */

#ifndef VMDEFLATE_ANALYSIS_HPP
#define VMDEFLATE_ANALYSIS_HPP

#include <vmdeflate/config.hpp>
#include <vmdeflate/trace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vmdeflate {

enum class SeriesResource { cpu, mem, mem_bw, disk_bw, net_bw };

inline std::string_view to_string(SeriesResource r)
{
    switch (r)
    {
        case SeriesResource::cpu: return "cpu";
        case SeriesResource::mem: return "mem";
        case SeriesResource::mem_bw: return "mem_bw";
        case SeriesResource::disk_bw: return "disk_bw";
        case SeriesResource::net_bw: return "net_bw";
    }
    return "?";
}

struct ResourceSeries
{
    std::string entity_id;
    SeriesResource resource = SeriesResource::cpu;
    std::vector<UtilSample> samples;  ///< utilization as a fraction of the allocation
};

struct SeriesSet
{
    std::vector<ResourceSeries> series;
    std::size_t clamped = 0;  ///< samples above 1 that were clamped
};

/**
 * Loads a long-format `entity_id,t_s,resource,util` CSV. Resource is one of
 * cpu, mem, mem_bw, disk_bw, net_bw, net_in, net_out; incoming and outgoing
 * traffic at the same timestamp are summed into net_bw. Values above 1 are
 * clamped (and counted) unless \a allow_over_one.
 */
inline SeriesSet load_resource_series(const std::filesystem::path& file, bool allow_over_one = false)
{
    std::ifstream in(file);
    if (!in)
    {
        throw InputError("cannot open '" + file.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || trim(line) != "entity_id,t_s,resource,util")
    {
        throw InputError(file.string() + ":1: expected header 'entity_id,t_s,resource,util'");
    }
    std::map<std::pair<std::string, SeriesResource>, std::map<Seconds, double>> raw;
    std::size_t lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (trim(line).empty())
        {
            continue;
        }
        const auto where = file.string() + ":" + std::to_string(lineno);
        const auto f = split(line, ',');
        if (f.size() != 4 || f[0].empty())
        {
            throw InputError(where + ": expected 4 fields");
        }
        const auto t = parse_number<Seconds>(f[1], where + ": t_s");
        const auto u = parse_number<double>(f[3], where + ": util");
        if (!(u >= 0.0))
        {
            throw InputError(where + ": negative utilization");
        }
        SeriesResource r;
        if (f[2] == "cpu") r = SeriesResource::cpu;
        else if (f[2] == "mem") r = SeriesResource::mem;
        else if (f[2] == "mem_bw") r = SeriesResource::mem_bw;
        else if (f[2] == "disk_bw") r = SeriesResource::disk_bw;
        else if (f[2] == "net_bw" || f[2] == "net_in" || f[2] == "net_out") r = SeriesResource::net_bw;
        else throw InputError(where + ": unknown resource '" + std::string(f[2]) + "'");
        raw[{std::string(f[0]), r}][t] += u;
    }
    SeriesSet out;
    for (auto& [key, samples] : raw)
    {
        ResourceSeries s{key.first, key.second, {}};
        for (auto [t, u] : samples)
        {
            if (u > 1.0 && !allow_over_one)
            {
                u = 1.0;
                ++out.clamped;
            }
            s.samples.push_back({t, u});
        }
        out.series.push_back(std::move(s));
    }
    return out;
}

/// CPU series of every VM in a trace.
inline std::vector<ResourceSeries> cpu_series(const Trace& trace)
{
    std::vector<ResourceSeries> out;
    out.reserve(trace.records.size());
    for (const auto& vm : trace.records)
    {
        out.push_back({vm.id, SeriesResource::cpu, vm.util_series});
    }
    return out;
}

/**
 * Share of samples whose utilization exceeds what is left after deflating
 * the allocation by \a d, i.e. util > 1 - d.
 *
 * Throws std::invalid_argument for an empty series or d outside [0,1).
 */
inline double underalloc_fraction(std::span<const UtilSample> samples, double d)
{
    if (samples.empty())
    {
        throw std::invalid_argument("empty utilization series");
    }
    if (!(d >= 0.0 && d < 1.0))
    {
        throw std::invalid_argument("deflation level must lie in [0,1)");
    }
    const double alloc = 1.0 - d;
    const auto over = std::count_if(samples.begin(), samples.end(), [alloc](const UtilSample& s) { return s.cpu > alloc; });
    return static_cast<double>(over) / static_cast<double>(samples.size());
}

/// Linear-interpolation quantile of sorted data (the usual "type 7").
inline double quantile_sorted(std::span<const double> sorted, double q)
{
    if (sorted.empty())
    {
        throw std::invalid_argument("quantile of an empty sample");
    }
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BoxSummary
{
    double level = 0.0;
    std::string group;
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

inline BoxSummary summarize(std::vector<double> values)
{
    std::sort(values.begin(), values.end());
    BoxSummary b;
    b.count = values.size();
    b.min = values.front();
    b.q1 = quantile_sorted(values, 0.25);
    b.median = quantile_sorted(values, 0.5);
    b.q3 = quantile_sorted(values, 0.75);
    b.max = values.back();
    return b;
}

enum class GroupBy { none, workload_class, mem_size_bucket, p95_bucket };

inline GroupBy parse_group_by(std::string_view s)
{
    if (s == "none") return GroupBy::none;
    if (s == "class" || s == "workload_class") return GroupBy::workload_class;
    if (s == "mem" || s == "mem_size_bucket") return GroupBy::mem_size_bucket;
    if (s == "p95" || s == "p95_bucket") return GroupBy::p95_bucket;
    throw InputError("unknown group key '" + std::string(s) + "'");
}

/// Memory size bucket: up to 2 GB, up to 8 GB, larger.
inline std::string mem_bucket(Units mem_mb)
{
    if (mem_mb <= 2048) return "le2GB";
    if (mem_mb <= 8192) return "le8GB";
    return "gt8GB";
}

/// p95 CPU bucket with cut points 0.33, 0.66 and 0.80.
inline std::string p95_bucket(double p95)
{
    if (p95 <= 0.33) return "p95_le33";
    if (p95 <= 0.66) return "p95_le66";
    if (p95 <= 0.80) return "p95_le80";
    return "p95_gt80";
}

/// One entity to analyse: its series plus the metadata used for grouping.
struct AnalysisEntity
{
    ResourceSeries series;
    std::optional<WorkloadClass> workload_class;
    std::optional<Units> mem_mb;
};

inline std::vector<AnalysisEntity> entities_from_trace(const Trace& trace)
{
    std::vector<AnalysisEntity> out;
    for (const auto& vm : trace.records)
    {
        out.push_back({{vm.id, SeriesResource::cpu, vm.util_series}, vm.workload_class, vm.max.mem});
    }
    return out;
}

inline std::string group_of(const AnalysisEntity& e, GroupBy by)
{
    switch (by)
    {
        case GroupBy::none: return "all";
        case GroupBy::workload_class:
            if (!e.workload_class) throw InputError("entity '" + e.series.entity_id + "' has no workload class");
            return std::string(to_string(*e.workload_class));
        case GroupBy::mem_size_bucket:
            if (!e.mem_mb) throw InputError("entity '" + e.series.entity_id + "' has no memory size");
            return mem_bucket(*e.mem_mb);
        case GroupBy::p95_bucket:
        {
            std::vector<double> v;
            for (const auto& s : e.series.samples) v.push_back(s.cpu);
            return p95_bucket(percentile_nearest_rank(std::move(v), 0.95));
        }
    }
    return "all";
}

/**
 * Box summaries of underalloc_fraction across entities, one row per
 * (level, group). Rows are ordered by level as given, then group name.
 * Entities with an empty series are skipped.
 */
inline std::vector<BoxSummary> underalloc_distribution(std::span<const AnalysisEntity> entities,
                                                       std::span<const double> levels, GroupBy by)
{
    std::vector<BoxSummary> out;
    for (double d : levels)
    {
        std::map<std::string, std::vector<double>> groups;
        for (const auto& e : entities)
        {
            if (e.series.samples.empty())
            {
                continue;
            }
            groups[group_of(e, by)].push_back(underalloc_fraction(e.series.samples, d));
        }
        for (auto& [g, values] : groups)
        {
            BoxSummary b = summarize(std::move(values));
            b.level = d;
            b.group = g;
            out.push_back(b);
        }
    }
    return out;
}

inline void write_distribution_csv(std::ostream& out, std::span<const BoxSummary> rows)
{
    out << "level,group,min,q1,median,q3,max\n";
    for (const auto& r : rows)
    {
        out << format_double(r.level) << ',' << r.group << ',' << format_double(r.min) << ','
            << format_double(r.q1) << ',' << format_double(r.median) << ',' << format_double(r.q3) << ','
            << format_double(r.max) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Deflation-performance model

/// Throughput as a function of deflation level: flat up to slack, linear up
/// to the knee, steeper after it, never below zero.
struct PerfModel
{
    double slack = 0.0;
    double linear_slope = 1.0;
    double knee = 1.0;
    double post_knee_slope = 1.0;
};

inline void validate(const PerfModel& m)
{
    if (!(0.0 <= m.slack && m.slack <= m.knee && m.knee <= 1.0))
    {
        throw std::invalid_argument("perf model needs 0 <= slack <= knee <= 1");
    }
    if (!(m.linear_slope >= 0.0 && m.post_knee_slope >= m.linear_slope))
    {
        throw std::invalid_argument("perf model needs 0 <= linear_slope <= post_knee_slope");
    }
}

inline double perf_curve(const PerfModel& m, double d)
{
    validate(m);
    if (!(d >= 0.0 && d <= 1.0))
    {
        throw std::invalid_argument("deflation level must lie in [0,1]");
    }
    double y = 1.0;
    if (d > m.slack)
    {
        y -= m.linear_slope * (std::min(d, m.knee) - m.slack);
    }
    if (d > m.knee)
    {
        y -= m.post_knee_slope * (d - m.knee);
    }
    return std::max(0.0, y);
}

struct PerfPoint
{
    double deflation = 0.0;
    double throughput = 0.0;
};

/**
 * Least-squares fit of a PerfModel to measured points. slack and knee are
 * searched on a 0.01 grid; for each pair the two slopes solve a 2x2 normal
 * system (clipped to the model's constraints).
 */
inline PerfModel fit_perf_model(std::span<const PerfPoint> points)
{
    if (points.empty())
    {
        throw std::invalid_argument("no points to fit");
    }
    PerfModel best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int si = 0; si <= 100; ++si)
    {
        for (int ki = si; ki <= 100; ++ki)
        {
            const double s = si / 100.0;
            const double k = ki / 100.0;
            // 1 - y = a*u + b*v with u = clamp(d,s,k)-s and v = max(0,d-k)
            double uu = 0, uv = 0, vv = 0, uy = 0, vy = 0;
            for (const auto& p : points)
            {
                const double u = std::clamp(p.deflation, s, k) - s;
                const double v = std::max(0.0, p.deflation - k);
                const double y = 1.0 - p.throughput;
                uu += u * u;
                uv += u * v;
                vv += v * v;
                uy += u * y;
                vy += v * y;
            }
            double a = 0.0, b = 0.0;
            const double det = uu * vv - uv * uv;
            if (std::abs(det) > 1e-12)
            {
                a = (uy * vv - vy * uv) / det;
                b = (uu * vy - uv * uy) / det;
            }
            else if (uu > 0.0)
            {
                a = uy / uu;
                b = a;
            }
            else if (vv > 0.0)
            {
                b = vy / vv;
            }
            a = std::max(0.0, a);
            b = std::max(a, b);
            const PerfModel m{s, a, k, b};
            double err = 0.0;
            for (const auto& p : points)
            {
                const double e = perf_curve(m, std::clamp(p.deflation, 0.0, 1.0)) - p.throughput;
                err += e * e;
            }
            if (err < best_err - 1e-15)
            {
                best_err = err;
                best = m;
            }
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Load-balancer weights

/**
 * Integer weights proportional to each replica's effective vCPUs, reduced
 * by their gcd. Fractional vCPUs are honoured at millicore resolution.
 * A replica with no capacity gets weight 0.
 */
inline std::vector<std::int64_t> lb_weights(std::span<const double> effective_vcpus)
{
    if (effective_vcpus.empty())
    {
        throw std::invalid_argument("no replicas");
    }
    std::vector<std::int64_t> w;
    w.reserve(effective_vcpus.size());
    std::int64_t g = 0;
    for (double v : effective_vcpus)
    {
        if (!(v >= 0.0) || !std::isfinite(v))
        {
            throw std::invalid_argument("effective vCPUs must be finite and non-negative");
        }
        const auto m = static_cast<std::int64_t>(std::llround(v * 1000.0));
        w.push_back(m);
        g = std::gcd(g, m);
    }
    if (g > 0)
    {
        for (auto& x : w) x /= g;
    }
    return w;
}

} // namespace vmdeflate

#endif // VMDEFLATE_ANALYSIS_HPP
