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
 * \file vmdeflate/report.hpp
 *
 * \brief JSON and CSV output for simulation reports.
 *
 * Keys keep insertion order so equal reports serialize to equal bytes.
 * Needs nlohmann/json (`json.hpp`) on the include path.
 */

#ifndef VMDEFLATE_REPORT_HPP
#define VMDEFLATE_REPORT_HPP

#include <vmdeflate/engine.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>

namespace vmdeflate {

using Json = nlohmann::ordered_json;

inline Json to_json(const ResourceVector& v)
{
    return Json{{"cpu", v.cpu}, {"mem", v.mem}, {"disk_bw", v.disk_bw}, {"net_bw", v.net_bw}};
}

inline Json to_json(const ScenarioConfig& c)
{
    Json j;
    j["servers"] = c.servers;
    j["server_capacity"] = to_json(c.server_capacity);
    j["policy"] = to_string(c.policy);
    j["deterministic_order"] = to_string(c.order);
    j["partitioned"] = c.partitioned;
    j["baseline"] = to_string(c.baseline);
    j["pricing"] = to_string(c.pricing.scheme);
    j["static_rate"] = c.pricing.static_rate;
    j["allocation_rate"] = c.pricing.allocation_rate;
    j["seed"] = c.seed;
    j["priority_levels"] = c.priority_levels;
    j["min_alloc_fraction"] = c.min_alloc_fraction;
    j["hp_threshold_vcpus"] = c.hp_threshold_vcpus;
    j["mem_block_mb"] = c.mem_block_mb;
    j["unplug_success"] = c.unplug_success;
    return j;
}

inline Json to_json(const SimReport& r, bool include_vms = true)
{
    Json j;
    j["config"] = to_json(r.config);
    j["servers"] = r.servers;
    j["reference_servers"] = r.reference_servers;
    j["vm_count"] = r.vm_count;
    j["deflatable_count"] = r.deflatable_count;
    j["failure_count"] = r.failure_count;
    j["preempted_count"] = r.preempted_count;
    j["rejected_deflatable"] = r.rejected_deflatable;
    j["rejected_on_demand"] = r.rejected_on_demand;
    j["pressure_events"] = r.pressure_events;
    j["failure_probability"] = r.failure_probability;
    j["throughput_loss"] = r.throughput_loss;
    j["overcommitment"] = r.overcommitment;
    j["cluster_overcommitment"] = r.cluster_overcommitment;
    j["revenue"] = Json{{"total", r.revenue.total},
                        {"on_demand", r.revenue.on_demand},
                        {"deflatable", r.revenue.deflatable},
                        {"per_server", r.revenue.per_server},
                        {"reference_per_server", r.revenue.reference_per_server},
                        {"ratio", r.revenue.ratio}};
    if (include_vms)
    {
        Json vms = Json::array();
        for (const auto& vm : r.vms)
        {
            Json tl = Json::array();
            for (const auto& s : vm.timeline)
            {
                tl.push_back(Json::array({s.t, s.cpu, s.mem}));
            }
            vms.push_back(Json{{"id", vm.id},
                               {"deflatable", vm.deflatable},
                               {"priority", vm.priority},
                               {"max", to_json(vm.max)},
                               {"server", vm.server},
                               {"status", to_string(vm.status)},
                               {"start", vm.start},
                               {"end", vm.end},
                               {"demand_mcore_s", vm.demand_mcore_s},
                               {"underalloc_mcore_s", vm.underalloc_mcore_s},
                               {"throughput_loss", vm.throughput_loss},
                               {"bill", vm.bill},
                               {"timeline", std::move(tl)}});
        }
        j["vms"] = std::move(vms);
        Json events = Json::array();
        for (const auto& e : r.events)
        {
            events.push_back(Json{{"t", e.t}, {"kind", e.kind}, {"vm", e.vm}, {"server", e.server}});
        }
        j["events"] = std::move(events);
    }
    return j;
}

inline std::string serialize(const SimReport& r) { return to_json(r).dump(2) + "\n"; }

inline constexpr std::string_view metrics_csv_header = "overcommit,failure_prob,tput_loss,revenue_ratio";

inline std::string metrics_csv_row(double overcommit, double failure, double loss, double revenue_ratio)
{
    return format_double(overcommit) + "," + format_double(failure) + "," + format_double(loss) + "," +
           format_double(revenue_ratio);
}

inline std::string metrics_csv_row(const SimReport& r)
{
    return metrics_csv_row(r.cluster_overcommitment, r.failure_probability, r.throughput_loss, r.revenue.ratio);
}

inline void write_metrics_csv(std::ostream& out, std::span<const SimReport> reports)
{
    out << metrics_csv_header << '\n';
    for (const auto& r : reports)
    {
        out << metrics_csv_row(r) << '\n';
    }
}

inline void write_text(const std::filesystem::path& file, const std::string& text)
{
    std::ofstream out(file, std::ios::binary);
    if (!out)
    {
        throw InputError("cannot write '" + file.string() + "'");
    }
    out << text;
}

} // namespace vmdeflate

#endif // VMDEFLATE_REPORT_HPP
