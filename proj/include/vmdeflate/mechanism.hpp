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
 * \file vmdeflate/mechanism.hpp
 *
 * \brief Hybrid hotplug + multiplexing deflation model.
 *
 * A VM is first shrunk with guest-visible hotplug, in whole vCPUs and
 * fixed-size memory blocks, but never below the hot-unplug safety
 * thresholds. Whatever hotplug cannot remove is taken by hypervisor-level
 * multiplexing (a cap behind unchanged virtual resources), which is exact.
 * Disk and network bandwidth are only ever multiplexed.
 */

#ifndef VMDEFLATE_MECHANISM_HPP
#define VMDEFLATE_MECHANISM_HPP

#include <vmdeflate/resources.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vmdeflate {

inline constexpr Units millicores_per_vcpu = 1000;
inline constexpr Units default_mem_block_mb = 128;

struct MechanismState
{
    ResourceVector max;          ///< undeflated size M
    Units visible_vcpus = 0;     ///< hotplugged vCPUs seen by the guest
    Units vcpu_cap = 0;          ///< millicores after multiplexing
    Units visible_mem = 0;       ///< hotplugged memory, MB
    Units mem_cap = 0;           ///< MB after multiplexing
    Units disk_cap = 0;
    Units net_cap = 0;
    Units hp_threshold_cpu = 1;  ///< vCPUs the guest keeps no matter what
    Units hp_threshold_mem = 0;  ///< MB, tracks the guest's resident set
    Units mem_block_mb = default_mem_block_mb;
};

inline Units ceil_div(Units n, Units d) { return (n + d - 1) / d; }

inline Units max_vcpus(const ResourceVector& max) { return ceil_div(max.cpu, millicores_per_vcpu); }

/// Undeflated state for a VM of size \a max.
inline MechanismState make_mechanism_state(const ResourceVector& max, Units hp_threshold_cpu = 1,
                                           Units hp_threshold_mem = 0,
                                           Units mem_block_mb = default_mem_block_mb)
{
    if (!max.non_negative() || mem_block_mb <= 0)
    {
        throw std::invalid_argument("invalid mechanism parameters");
    }
    MechanismState s;
    s.max = max;
    s.visible_vcpus = max_vcpus(max);
    s.vcpu_cap = max.cpu;
    s.visible_mem = max.mem;
    s.mem_cap = max.mem;
    s.disk_cap = max.disk_bw;
    s.net_cap = max.net_bw;
    s.hp_threshold_cpu = std::clamp<Units>(hp_threshold_cpu, std::min<Units>(1, s.visible_vcpus), s.visible_vcpus);
    s.hp_threshold_mem = std::clamp<Units>(hp_threshold_mem, 0, max.mem);
    s.mem_block_mb = mem_block_mb;
    return s;
}

/// The allocation the rest of the simulator sees.
inline ResourceVector effective_alloc(const MechanismState& s)
{
    return {s.vcpu_cap, s.mem_cap, s.disk_cap, s.net_cap};
}

/**
 * Moves \a state to \a target.
 *
 * Hotplug goes to max(threshold, round_up(target)) for CPU and memory. When
 * shrinking, only a fraction \a unplug_success of the requested units may
 * actually be released by the guest; the multiplexing cap still lands
 * exactly on target. Plugging resources back in always succeeds.
 *
 * Throws std::invalid_argument when the target exceeds the VM's maximum.
 */
inline MechanismState deflate_hybrid(MechanismState state, const ResourceVector& target, double unplug_success = 1.0)
{
    if (!target.non_negative() || !dominates(state.max, target))
    {
        throw std::invalid_argument("deflation target outside [0, M]");
    }
    if (!(unplug_success >= 0.0 && unplug_success <= 1.0))
    {
        throw std::invalid_argument("unplug success fraction must lie in [0,1]");
    }

    auto hotplug = [unplug_success](Units visible, Units wanted) {
        if (wanted >= visible)
        {
            return wanted;
        }
        const auto removable = static_cast<double>(visible - wanted);
        return visible - static_cast<Units>(std::floor(removable * unplug_success));
    };

    const Units cpu_ceiling = max_vcpus(state.max);
    const Units want_vcpus =
        std::min(cpu_ceiling, std::max(state.hp_threshold_cpu, ceil_div(target.cpu, millicores_per_vcpu)));
    state.visible_vcpus = hotplug(state.visible_vcpus, want_vcpus);
    state.vcpu_cap = target.cpu;

    const Units want_mem = std::min(
        state.max.mem, std::max(state.hp_threshold_mem, ceil_div(target.mem, state.mem_block_mb) * state.mem_block_mb));
    state.visible_mem = hotplug(state.visible_mem, want_mem);
    state.mem_cap = target.mem;

    state.disk_cap = target.disk_bw;
    state.net_cap = target.net_bw;
    return state;
}

/// Refreshes the memory threshold from a resident-set estimate and plugs
/// memory back in if the guest now needs more than is visible.
inline MechanismState update_rss_threshold(MechanismState state, Units rss_mb)
{
    state.hp_threshold_mem = std::clamp<Units>(rss_mb, 0, state.max.mem);
    state.visible_mem = std::max(state.visible_mem, state.hp_threshold_mem);
    return state;
}

} // namespace vmdeflate

#endif // VMDEFLATE_MECHANISM_HPP
