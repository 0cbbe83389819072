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


// Shared helpers for the test suite.

#ifndef VMDEFLATE_TESTS_SUPPORT_HPP
#define VMDEFLATE_TESTS_SUPPORT_HPP

#include <vmdeflate/vmdeflate.hpp>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace vmdeflate::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    TempDir()
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vmdeflate_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline DeflationCandidate cpu_vm(std::string id, Units max, Units current = -1, double priority = 0.5, Units min = 0)
{
    DeflationCandidate c;
    c.id = std::move(id);
    c.max = {max, 0, 0, 0};
    c.min = {min, 0, 0, 0};
    c.priority = priority;
    c.current = {current < 0 ? max : current, 0, 0, 0};
    return c;
}

inline const std::vector<double>& priority_grid()
{
    static const std::vector<double> g{0.1, 0.2, 0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9};
    return g;
}

/// Random deflatable VMs on all four dimensions.
inline std::vector<DeflationCandidate> random_candidates(std::mt19937_64& rng, std::size_t n, bool fresh = false)
{
    std::uniform_int_distribution<Units> size(0, 64000);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, priority_grid().size() - 1);
    std::vector<DeflationCandidate> vms;
    for (std::size_t i = 0; i < n; ++i)
    {
        DeflationCandidate c;
        c.id = "vm" + std::to_string(i);
        for (Resource r : all_resources)
        {
            c.max[r] = size(rng);
            c.min[r] = static_cast<Units>(unit(rng) * static_cast<double>(c.max[r]));
            c.current[r] = fresh ? c.max[r] : c.max[r] - static_cast<Units>(unit(rng) * 0.5 * static_cast<double>(c.max[r]));
        }
        c.priority = priority_grid()[pick(rng)];
        vms.push_back(std::move(c));
    }
    return vms;
}

/// Trace directory with the given vms.csv / util.csv bodies.
inline void write_trace(const std::filesystem::path& dir, const std::string& vms, const std::string& util,
                        const std::string& meta = "interval_s=300\n")
{
    std::filesystem::create_directories(dir);
    write_file(dir / "vms.csv", "vm_id,arrival_s,departure_s,cpu_mcores,mem_mb,class\n" + vms);
    write_file(dir / "util.csv", "vm_id,t_s,cpu_util\n" + util);
    write_file(dir / "meta.txt", meta);
}

inline std::filesystem::path data_dir() { return VMDEFLATE_DATA_DIR; }

} // namespace vmdeflate::testing

#endif // VMDEFLATE_TESTS_SUPPORT_HPP
