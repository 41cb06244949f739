#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tgd/harness.hpp"
#include "tgd/parallel.hpp"

namespace {

using nlohmann::json;
using namespace tgd;
using namespace tgd::harness;

struct FileTrace final : TraceSink {
    std::ofstream out;
    explicit FileTrace(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw std::runtime_error("cannot write trace file: " + path);
    }
    void line(const std::string& s) override { out << s << '\n'; }
};

RunConfig load_or_default(const std::string& path) {
    if (path.empty()) return default_config();
    return load_config(path);
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, std::optional<int> threads,
            const std::string& format, const std::string& trace_path) {
    RunConfig cfg = load_or_default(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (!format.empty()) cfg.format = format;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    validate_config(cfg);
    set_thread_count(cfg.threads);

    const Problem pb = build_problem(cfg);
    std::unique_ptr<FileTrace> trace;
    if (!trace_path.empty()) trace = std::make_unique<FileTrace>(trace_path);
    const auto cells = run_sweep(cfg, pb, trace.get());
    emit_results(cfg, pb, cells, cfg.out_dir);

    std::size_t failed = 0;
    for (const auto& c : cells)
        if (c.failed) ++failed;
    std::cout << "wrote " << cells.size() << " cells to " << cfg.out_dir << " ("
              << failed << " failed)\n";
    return 0;
}

int cmd_oracle(const std::string& config_path, std::size_t condition, std::size_t n_samples,
               const std::string& out_path) {
    RunConfig cfg = load_or_default(config_path);
    const Problem pb = build_problem(cfg);
    if (condition >= pb.conditions.size())
        throw std::invalid_argument("condition index out of range (have " +
                                    std::to_string(pb.conditions.size()) + ")");
    RngStream rng(derive_key(derive_key(cfg.seed, 0xA007), condition));
    const auto pts = oracle_samples(pb.prior, *pb.observations[condition], n_samples, rng);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path, std::ios::binary);
        if (!file) throw std::runtime_error("cannot write " + out_path);
        out = &file;
    }
    for (const auto& p : pts) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (j) *out << ',';
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", p[j]);
            *out << buf;
        }
        *out << '\n';
    }
    return 0;
}

// Reshapes results.csv into one JSON series per method: N on the x axis,
// aggregated distance on the y axis. Plotting stays outside this tool.
int cmd_plotdata(const std::string& in_path, const std::string& out_path) {
    const auto cells = read_results_csv(in_path);
    const auto rows = aggregate(cells);
    json series = json::object();
    for (const auto& r : rows) {
        auto& s = series[r.method];
        if (s.is_null()) {
            s["n_particles"] = json::array();
            s["mean_swd"] = json::array();
            s["stderr_swd"] = json::array();
        }
        s["n_particles"].push_back(r.n_particles);
        s["mean_swd"].push_back(r.mean_swd);
        s["stderr_swd"].push_back(r.stderr_swd);
    }
    json doc{{"source", in_path}, {"series", series}};
    if (out_path.empty()) {
        std::cout << doc.dump(2) << '\n';
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        out << doc.dump(2) << '\n';
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    const RunConfig cfg = load_or_default(config_path);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    std::cout << "ok " << buf << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Annealed particle sampler for diffusion-prior inverse problems"};
    app.require_subcommand(1);

    std::string config_path, out_dir, format, trace_path, in_path, out_path;
    std::uint64_t seed_val = 0;
    int threads_val = 0;
    std::size_t condition = 0, n_samples = 10000;

    auto* run = app.add_subcommand("run", "Run the full method/particle-count sweep");
    run->add_option("--config", config_path, "Config JSON (omit for built-in defaults)");
    auto* seed_opt = run->add_option("--seed", seed_val, "Override config seed");
    auto* threads_opt = run->add_option("--threads", threads_val, "Override thread count");
    run->add_option("--out", out_dir, "Override output directory");
    run->add_option("--format", format, "Override output format (csv|jsonl)")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    run->add_option("--trace", trace_path, "Write per-stage JSONL trace to this file");

    auto* oracle = app.add_subcommand("oracle", "Dump exact posterior samples for a condition");
    oracle->add_option("--config", config_path, "Config JSON (omit for built-in defaults)");
    oracle->add_option("--condition", condition, "Condition index");
    oracle->add_option("--samples", n_samples, "Number of samples");
    oracle->add_option("--out", out_path, "Output CSV (default stdout)");

    auto* plotdata = app.add_subcommand("plotdata", "Aggregate results.csv into plot series");
    plotdata->add_option("--in", in_path, "Path to results.csv")->required();
    plotdata->add_option("--out", out_path, "Output JSON (default stdout)");

    auto* validate = app.add_subcommand("validate", "Parse and validate a config");
    validate->add_option("--config", config_path, "Config JSON (omit for built-in defaults)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed())
            return cmd_run(config_path, out_dir,
                           seed_opt->count() ? std::optional<std::uint64_t>(seed_val)
                                             : std::nullopt,
                           threads_opt->count() ? std::optional<int>(threads_val) : std::nullopt,
                           format, trace_path);
        if (oracle->parsed()) return cmd_oracle(config_path, condition, n_samples, out_path);
        if (plotdata->parsed()) return cmd_plotdata(in_path, out_path);
        if (validate->parsed()) return cmd_validate(config_path);
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", e.what()}};
        std::cerr << err.dump() << '\n';
        return 1;
    }
    return 0;
}
