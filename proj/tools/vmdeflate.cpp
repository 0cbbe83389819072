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

// vmdeflate command-line tool.
//
// Exit codes: 0 success, 1 input error, 2 infeasible configuration,
// 3 internal invariant violation.

#include <vmdeflate/vmdeflate.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace vmdeflate;

namespace {

std::vector<double> parse_levels(const std::string& text)
{
    std::vector<double> out;
    for (auto item : split(text, ','))
    {
        out.push_back(parse_number<double>(item, "--levels entry"));
    }
    return out;
}

std::vector<std::size_t> parse_counts(const std::string& text)
{
    std::vector<std::size_t> out;
    for (auto item : split(text, ','))
    {
        out.push_back(parse_number<std::size_t>(item, "--servers entry"));
    }
    if (out.empty())
    {
        throw InputError("--servers needs at least one count");
    }
    return out;
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
    {
        throw InputError("cannot create '" + dir.string() + "': " + ec.message());
    }
}

struct AnalyzeArgs
{
    std::string trace;
    std::string series;
    std::string levels = "0.1,0.2,0.3,0.4,0.5";
    std::string group_by = "none";
    std::string out;
    bool allow_over_one = false;
    std::size_t sample = 0;
    std::uint64_t seed = 1;
};

int cmd_analyze(const AnalyzeArgs& a)
{
    if (a.trace.empty() == a.series.empty())
    {
        throw InputError("analyze: give exactly one of --trace or --series");
    }
    const auto levels = parse_levels(a.levels);
    const auto by = parse_group_by(a.group_by);
    if (!a.trace.empty())
    {
        if (!fs::is_directory(a.trace))
        {
            throw InputError("--trace: '" + a.trace + "' is not a directory");
        }
        std::optional<Sampling> sampling;
        if (a.sample > 0) sampling = Sampling{a.sample, a.seed};
        const auto entities = entities_from_trace(load_trace(a.trace, sampling));
        const auto rows = underalloc_distribution(entities, levels, by);
        std::ofstream out(a.out);
        if (!out) throw InputError("cannot write '" + a.out + "'");
        write_distribution_csv(out, rows);
        return 0;
    }
    if (by == GroupBy::workload_class || by == GroupBy::mem_size_bucket)
    {
        throw InputError("--series input carries no class or size metadata; use --group-by none or p95");
    }
    const auto set = load_resource_series(a.series, a.allow_over_one);
    if (set.clamped > 0)
    {
        std::cerr << "clamped " << set.clamped << " samples above 1\n";
    }
    // one output file per resource: <stem>_<resource><ext>
    const fs::path out(a.out);
    for (auto r : {SeriesResource::cpu, SeriesResource::mem, SeriesResource::mem_bw, SeriesResource::disk_bw,
                   SeriesResource::net_bw})
    {
        std::vector<AnalysisEntity> entities;
        for (const auto& s : set.series)
        {
            if (s.resource == r) entities.push_back({s, std::nullopt, std::nullopt});
        }
        if (entities.empty()) continue;
        const auto rows = underalloc_distribution(entities, levels, by);
        const fs::path file = out.parent_path() / (out.stem().string() + "_" + std::string(to_string(r)) +
                                                   out.extension().string());
        std::ofstream f(file);
        if (!f) throw InputError("cannot write '" + file.string() + "'");
        write_distribution_csv(f, rows);
    }
    return 0;
}

int cmd_gen_trace(const std::string& spec_file, const std::string& out)
{
    const auto spec = parse_synthetic_spec(KeyValueFile::load(spec_file));
    ensure_dir(out);
    save_trace(out, gen_synthetic(spec));
    return 0;
}

int cmd_simulate(const std::string& config_file, const std::string& out)
{
    const auto config = load_scenario(config_file);
    const auto report = run(config);
    ensure_dir(out);
    write_text(fs::path(out) / "report.json", serialize(report));
    write_text(fs::path(out) / "metrics.csv",
               std::string(metrics_csv_header) + "\n" + metrics_csv_row(report) + "\n");
    return 0;
}

int cmd_sweep(const std::string& config_file, const std::string& servers, const std::string& out, unsigned jobs)
{
    const auto config = load_scenario(config_file);
    const auto counts = parse_counts(servers);
    const Trace trace = prepare_trace(config);
    const auto reports = sweep_overcommitment(config, trace, counts, jobs);
    ensure_dir(out);
    std::string csv = std::string(metrics_csv_header) + "\n";
    for (const auto& r : reports)
    {
        write_text(fs::path(out) / ("report_" + std::to_string(r.servers) + ".json"), serialize(r));
        csv += metrics_csv_row(r) + "\n";
    }
    write_text(fs::path(out) / "sweep.csv", csv);
    return 0;
}

int cmd_report(const std::string& in, const std::string& format)
{
    if (format != "csv" && format != "json")
    {
        throw InputError("--format must be csv or json");
    }
    if (!fs::is_directory(in))
    {
        throw InputError("--in: '" + in + "' is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in))
    {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with("report") && e.path().extension() == ".json")
        {
            files.push_back(e.path());
        }
    }
    if (files.empty())
    {
        throw InputError("--in: no report*.json files in '" + in + "'");
    }
    std::vector<Json> reports;
    for (const auto& f : files)
    {
        std::ifstream s(f);
        try
        {
            reports.push_back(Json::parse(s));
        }
        catch (const Json::parse_error& e)
        {
            throw InputError(f.string() + ": " + e.what());
        }
    }
    // most servers first, i.e. increasing overcommitment
    std::sort(reports.begin(), reports.end(),
              [](const Json& a, const Json& b) { return a.at("servers").get<std::size_t>() > b.at("servers").get<std::size_t>(); });
    if (format == "csv")
    {
        std::cout << metrics_csv_header << '\n';
        for (const auto& r : reports)
        {
            std::cout << metrics_csv_row(r.at("cluster_overcommitment").get<double>(),
                                         r.at("failure_probability").get<double>(),
                                         r.at("throughput_loss").get<double>(),
                                         r.at("revenue").at("ratio").get<double>())
                      << '\n';
        }
    }
    else
    {
        Json summary = Json::array();
        for (auto r : reports)
        {
            r.erase("vms");
            r.erase("events");
            summary.push_back(std::move(r));
        }
        std::cout << summary.dump(2) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"VM deflation cluster simulator and trace analytics"};
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Underallocation distributions of a trace");
    an->add_option("--trace", analyze.trace, "Trace directory (vms.csv, util.csv)");
    an->add_option("--series", analyze.series, "Long-format entity_id,t_s,resource,util CSV");
    an->add_option("--levels", analyze.levels, "Deflation levels, comma separated");
    an->add_option("--group-by", analyze.group_by, "none | class | mem | p95");
    an->add_option("--out", analyze.out, "Output CSV")->required();
    an->add_flag("--allow-over-one", analyze.allow_over_one, "Keep utilization above 1");
    an->add_option("--sample", analyze.sample, "Analyse a random sample of this many VMs");
    an->add_option("--seed", analyze.seed, "Sampling seed");

    std::string spec_file, gen_out;
    auto* gen = app.add_subcommand("gen-trace", "Write a synthetic trace");
    gen->add_option("--spec", spec_file, "Synthetic workload spec")->required();
    gen->add_option("--out", gen_out, "Output trace directory")->required();

    std::string sim_config, sim_out;
    auto* sim = app.add_subcommand("simulate", "Run one scenario");
    sim->add_option("--config", sim_config, "Scenario file")->required();
    sim->add_option("--out", sim_out, "Output directory")->required();

    std::string sweep_config, sweep_servers, sweep_out;
    unsigned jobs = 1;
    auto* sw = app.add_subcommand("sweep", "Run one scenario per server count");
    sw->add_option("--config", sweep_config, "Scenario file")->required();
    sw->add_option("--servers", sweep_servers, "Server counts, comma separated")->required();
    sw->add_option("--out", sweep_out, "Output directory")->required();
    sw->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);

    std::string report_in, report_format = "csv";
    auto* rep = app.add_subcommand("report", "Summarize reports in a directory");
    rep->add_option("--in", report_in, "Directory with report*.json")->required();
    rep->add_option("--format", report_format, "csv | json");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp&)
    {
        std::cout << app.help();
        return 0;
    }
    catch (const CLI::ParseError& e)
    {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try
    {
        if (*an) return cmd_analyze(analyze);
        if (*gen) return cmd_gen_trace(spec_file, gen_out);
        if (*sim) return cmd_simulate(sim_config, sim_out);
        if (*sw) return cmd_sweep(sweep_config, sweep_servers, sweep_out, jobs);
        if (*rep) return cmd_report(report_in, report_format);
    }
    catch (const InfeasibleConfig& e)
    {
        std::cerr << "infeasible: " << e.what() << '\n';
        return 2;
    }
    catch (const std::logic_error& e)
    {
        // std::invalid_argument derives from logic_error but is an input problem
        if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr)
        {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
