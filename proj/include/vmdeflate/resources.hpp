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
 * \file vmdeflate/resources.hpp
 *
 * \brief Multi-dimensional resource vectors in integer units.
 *
 * CPU is counted in millicores, memory in MB, disk and network bandwidth in
 * abstract integer units. Keeping everything integral makes the
 * conservation checks of the deflation policies exact.
 */

#ifndef VMDEFLATE_RESOURCES_HPP
#define VMDEFLATE_RESOURCES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string_view>

namespace vmdeflate {

using Units = std::int64_t;

enum class Resource : std::size_t { cpu = 0, mem = 1, disk_bw = 2, net_bw = 3 };

inline constexpr std::size_t num_resources = 4;

inline constexpr std::array<Resource, num_resources> all_resources{
    Resource::cpu, Resource::mem, Resource::disk_bw, Resource::net_bw};

inline constexpr std::string_view to_string(Resource r)
{
    switch (r)
    {
        case Resource::cpu: return "cpu";
        case Resource::mem: return "mem";
        case Resource::disk_bw: return "disk_bw";
        case Resource::net_bw: return "net_bw";
    }
    return "?";
}

struct ResourceVector
{
    Units cpu = 0;
    Units mem = 0;
    Units disk_bw = 0;
    Units net_bw = 0;

    constexpr Units& operator[](Resource r)
    {
        switch (r)
        {
            case Resource::cpu: return cpu;
            case Resource::mem: return mem;
            case Resource::disk_bw: return disk_bw;
            case Resource::net_bw: return net_bw;
        }
        throw std::out_of_range("bad resource index");
    }

    constexpr Units operator[](Resource r) const
    {
        return const_cast<ResourceVector&>(*this)[r];
    }

    constexpr bool is_zero() const
    {
        return cpu == 0 && mem == 0 && disk_bw == 0 && net_bw == 0;
    }

    constexpr bool non_negative() const
    {
        return cpu >= 0 && mem >= 0 && disk_bw >= 0 && net_bw >= 0;
    }

    friend constexpr bool operator==(const ResourceVector&, const ResourceVector&) = default;

    constexpr ResourceVector& operator+=(const ResourceVector& o)
    {
        cpu += o.cpu; mem += o.mem; disk_bw += o.disk_bw; net_bw += o.net_bw;
        return *this;
    }

    constexpr ResourceVector& operator-=(const ResourceVector& o)
    {
        cpu -= o.cpu; mem -= o.mem; disk_bw -= o.disk_bw; net_bw -= o.net_bw;
        return *this;
    }

    friend constexpr ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
    friend constexpr ResourceVector operator-(ResourceVector a, const ResourceVector& b) { return a -= b; }

    friend std::ostream& operator<<(std::ostream& os, const ResourceVector& v)
    {
        return os << '(' << v.cpu << ',' << v.mem << ',' << v.disk_bw << ',' << v.net_bw << ')';
    }
};

/// True iff every component of \a a is at least the matching component of \a b.
constexpr bool dominates(const ResourceVector& a, const ResourceVector& b)
{
    return a.cpu >= b.cpu && a.mem >= b.mem && a.disk_bw >= b.disk_bw && a.net_bw >= b.net_bw;
}

/// Round-half-up to the nearest integer unit.
inline Units round_half_up(long double x)
{
    return static_cast<Units>(std::floor(x + 0.5L));
}

/**
 * Multiplies every component by \a f and rounds half-up to integer units.
 *
 * Throws std::invalid_argument for negative or non-finite factors.
 */
inline ResourceVector scale(const ResourceVector& a, double f)
{
    if (!(f >= 0.0) || !std::isfinite(f))
    {
        throw std::invalid_argument("scale factor must be finite and non-negative");
    }
    ResourceVector out;
    for (Resource r : all_resources)
    {
        out[r] = round_half_up(static_cast<long double>(a[r]) * static_cast<long double>(f));
    }
    return out;
}

inline ResourceVector elementwise_max(const ResourceVector& a, const ResourceVector& b)
{
    ResourceVector out;
    for (Resource r : all_resources)
    {
        out[r] = std::max(a[r], b[r]);
    }
    return out;
}

inline ResourceVector elementwise_min(const ResourceVector& a, const ResourceVector& b)
{
    ResourceVector out;
    for (Resource r : all_resources)
    {
        out[r] = std::min(a[r], b[r]);
    }
    return out;
}

/// max(0, a - b) per component.
inline ResourceVector positive_part(const ResourceVector& a, const ResourceVector& b)
{
    return elementwise_max(a - b, ResourceVector{});
}

/// Real-valued companion used for availability vectors.
using RealVector = std::array<double, num_resources>;

inline RealVector to_real(const ResourceVector& v)
{
    return {static_cast<double>(v.cpu), static_cast<double>(v.mem),
            static_cast<double>(v.disk_bw), static_cast<double>(v.net_bw)};
}

} // namespace vmdeflate

#endif // VMDEFLATE_RESOURCES_HPP
