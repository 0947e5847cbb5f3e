// Command-line front end: config-driven experiments plus report rendering.
//
// Exit codes: 0 success, 1 config error, 2 partial failure, 3 total failure.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "rewirelab/experiments.hpp"

namespace {

using namespace rewirelab;

struct GlobalOpts {
    std::string config_path;
    std::string seed_list;
    std::string out_dir;
    int jobs = 0;
    bool resume = false;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) seeds.push_back(std::stoull(tok));
    return seeds;
}

int run_subcommand(const std::string& experiment, const GlobalOpts& opts) {
    ExperimentConfig cfg;
    try {
        json j = opts.config_path.empty() ? json{{"experiment", experiment}} : load_json_file(opts.config_path);
        j["experiment"] = experiment;
        cfg = experiment_from_json(j);
        if (!opts.seed_list.empty()) cfg.seeds = parse_seed_list(opts.seed_list);
        if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
        if (opts.jobs > 0) cfg.jobs = opts.jobs;
        else if (cfg.jobs <= 0) cfg.jobs = static_cast<int>(std::min<std::size_t>(cfg.seeds.size(),
                                                                                  std::thread::hardware_concurrency()));
        cfg.resume = opts.resume;
        cfg.train.check();
        cfg.backbone.check();
        if (cfg.seeds.empty()) throw std::invalid_argument("seed list must not be empty");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }
    try {
        ExperimentResult res = run_experiment(cfg);
        std::cout << "summary written to " << cfg.out_dir << "/summary.json\n";
        if (res.exit_code == 2) std::cerr << "partial failure: some seeds failed (see summary)\n";
        if (res.exit_code == 3) std::cerr << "total failure: no usable runs (see summary)\n";
        return res.exit_code;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "experiment failed: " << e.what() << "\n";
        return 3;
    }
}

int run_report(const std::vector<std::string>& summaries, const std::string& format) {
    try {
        for (const auto& path : summaries) {
            json s = load_json_file(path);
            std::string schema = s.value("schema", "");
            if (schema != kSchemaVersion)
                throw std::runtime_error(path + ": schema version mismatch: file has '" + schema +
                                         "', renderer expects '" + kSchemaVersion + "'");
            if (s.contains("decomposition")) {
                std::cout << render_decomposition(s.at("decomposition"), s.value("experiment", "decompose"), format);
            } else if (s.contains("corruption")) {
                for (const auto& cell : s.at("corruption").at("cells"))
                    std::cout << render_decomposition(cell.at("decomposition"),
                                                      "r=" + std::to_string(cell.at("r").get<double>()), format);
            } else if (s.contains("tsweep")) {
                const auto& t = s.at("tsweep");
                if (format == "csv") std::cout << "arm,T,mean,std\n";
                else std::cout << "| arm | T | mean | std |\n|---|---|---|---|\n";
                for (const auto& c : t.at("cells")) {
                    if (format == "csv")
                        std::cout << c.at("arm").get<std::string>() << "," << c.at("T").get<double>() << ","
                                  << c.at("mean").get<double>() << "," << c.at("std").get<double>() << "\n";
                    else
                        std::cout << "| " << c.at("arm").get<std::string>() << " | " << c.at("T").get<double>()
                                  << " | " << c.at("mean").get<double>() << " | " << c.at("std").get<double>()
                                  << " |\n";
                }
            } else {
                std::cout << s.dump(2) << "\n";  // json passthrough for the remaining kinds
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "report error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rewirelab: bilevel graph rewiring diagnostics"};
    app.require_subcommand(1);

    GlobalOpts opts;
    std::vector<std::string> report_paths;
    std::string report_format = "markdown-table";

    const std::vector<std::string> kinds = {"train",   "decompose", "tsweep",     "corruption",        "distill",
                                            "spectra", "jacobian",  "igr-oracle", "bandwidth-ablation"};
    std::string chosen;
    for (const auto& kind : kinds) {
        CLI::App* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        sub->add_option("--config", opts.config_path, "experiment config JSON");
        sub->add_option("--seed-list", opts.seed_list, "comma-separated seed overrides");
        sub->add_option("--out", opts.out_dir, "output directory override");
        sub->add_option("--jobs", opts.jobs, "seed-level parallelism");
        sub->add_flag("--resume", opts.resume, "reuse completed runs by content hash");
        sub->callback([&chosen, kind]() { chosen = kind; });
    }
    CLI::App* rep = app.add_subcommand("report", "render summary JSON files as tables");
    rep->add_option("summaries", report_paths, "summary.json paths")->required();
    rep->add_option("--format", report_format, "json | csv | markdown-table");
    rep->callback([&chosen]() { chosen = "report"; });

    CLI11_PARSE(app, argc, argv);

    if (chosen == "report") {
        if (report_format == "json") {
            for (const auto& p : report_paths) {
                try {
                    std::cout << load_json_file(p).dump(2) << "\n";
                } catch (const std::exception& e) {
                    std::cerr << "report error: " << e.what() << "\n";
                    return 1;
                }
            }
            return 0;
        }
        return run_report(report_paths, report_format == "csv" ? "csv" : "markdown");
    }
    return run_subcommand(chosen, opts);
}
