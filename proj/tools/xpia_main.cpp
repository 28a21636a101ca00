#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "xpia/config.hpp"
#include "xpia/corpus.hpp"
#include "xpia/exfil_server.hpp"
#include "xpia/experiment.hpp"
#include "xpia/util.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) {
    g_stop.store(true);
}

// "host:port" -> pair; throws on anything else.
std::pair<std::string, int> parse_bind(const std::string& bind) {
    size_t colon = bind.rfind(':');
    if (colon == std::string::npos || colon == 0) {
        throw std::runtime_error("--bind expects host:port, got '" + bind + "'");
    }
    int port = std::stoi(bind.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::runtime_error("port out of range in '" + bind + "'");
    return {bind.substr(0, colon), port};
}

int cmd_validate_config(const std::string& config_path) {
    xpia::experiment_config config = xpia::load_config(config_path);
    std::vector<std::string> problems = xpia::validate_config(config);
    if (problems.empty()) {
        std::cout << "config ok: " << config_path << "\n";
        return 0;
    }
    for (const std::string& problem : problems) {
        std::cerr << "config problem: " << problem << "\n";
    }
    return 2;
}

int cmd_build_dataset(const std::string& config_path, const std::string& out_path) {
    xpia::experiment_config config = xpia::load_config(config_path);

    auto tasks = xpia::import_corpus(config.tasks_path, xpia::corpus_kind::base_task);
    auto injections = xpia::import_corpus(config.injections_path, xpia::corpus_kind::injection);
    std::vector<xpia::corpus_record> suffixes;
    if (!config.suffixes_path.empty() && std::filesystem::exists(config.suffixes_path)) {
        suffixes = xpia::import_corpus(config.suffixes_path, xpia::corpus_kind::suffix);
    }

    std::vector<std::string> model_ids;
    for (const auto& model : config.models) model_ids.push_back(model.id);

    auto trials = xpia::build_trials(model_ids, config.classes, tasks, injections, suffixes,
                                     config.document_template_id);
    xpia::write_trials(out_path, trials);
    std::cout << nlohmann::json{{"trials", trials.size()}, {"out", out_path}}.dump() << "\n";
    return 0;
}

int cmd_serve_exfil(const std::string& bind, const std::string& log_path) {
    std::pair<std::string, int> addr;
    try {
        addr = parse_bind(bind);
    } catch (const std::exception& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }
    xpia::exfil_server server(addr.first, addr.second, log_path);
    server.start();
    std::cout << "listening on " << server.exfil_url() << " (records at " << server.base_url()
              << "/records)\n";
    std::cout.flush();

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    const uint64_t count = server.shutdown();
    std::cout << nlohmann::json{{"records", count}}.dump() << "\n";
    return 0;
}

int cmd_run(const std::string& config_path, const std::string& trials_path,
            const std::string& out_path) {
    xpia::experiment_config config = xpia::load_config(config_path);
    std::vector<std::string> problems = xpia::validate_config(config);
    if (!problems.empty()) {
        for (const std::string& problem : problems) {
            std::cerr << "config problem: " << problem << "\n";
        }
        return 2;
    }

    std::vector<xpia::trial_spec> trials = xpia::read_trials(trials_path);
    xpia::backend_registry backends = xpia::build_backends(config);

    if (!xpia::fetch_exfil_records(config.attacker_endpoint)) {
        std::cerr << "warning: attacker endpoint " << config.attacker_endpoint
                  << " is not answering; exfiltration will not be server-confirmed\n";
    }

    xpia::run_options options;
    options.max_in_flight = config.max_in_flight;
    options.progress = &std::cerr;
    std::vector<xpia::trial_result> results =
        xpia::run_experiment(config, trials, backends, out_path, options);

    size_t errored = 0;
    size_t confirmed = 0;
    for (const auto& result : results) {
        if (result.out == xpia::outcome::errored) errored++;
        if (result.server_confirmed) confirmed++;
    }
    std::cout << nlohmann::json{{"trials", results.size()},
                                {"errored", errored},
                                {"server_confirmed", confirmed},
                                {"results", out_path}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_report(const std::string& results_path, const std::string& format_name,
               const std::string& out_path) {
    auto format = xpia::report_format_from_string(format_name);
    if (!format) {
        std::cerr << "unknown report format '" << format_name << "' (table|csv|json)\n";
        return 2;
    }
    std::vector<xpia::trial_result> results = xpia::load_results(results_path);
    xpia::rate_report report = xpia::aggregate(results);
    const std::string rendered = xpia::emit_report(report, results, *format);
    if (out_path.empty()) {
        std::cout << rendered;
    } else {
        xpia::write_text_file(out_path, rendered);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-prompt injection exfiltration harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::string trials_path;
    std::string results_path;
    std::string bind = "127.0.0.1:0";
    std::string log_path;
    std::string format_name = "table";

    CLI::App* validate = app.add_subcommand("validate-config", "check a config file");
    validate->add_option("--config", config_path, "config file")->required();

    CLI::App* build = app.add_subcommand("build-dataset", "compose the trial list");
    build->add_option("--config", config_path, "config file")->required();
    build->add_option("--out", out_path, "trial list output (jsonl)")->required();

    CLI::App* serve = app.add_subcommand("serve-exfil", "run the mock attacker endpoint");
    serve->add_option("--bind", bind, "host:port (port 0 = ephemeral)")->required();
    serve->add_option("--log", log_path, "record log path (jsonl)")->required();

    CLI::App* run = app.add_subcommand("run", "execute trials");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--trials", trials_path, "trial list (jsonl)")->required();
    run->add_option("--out", results_path, "results output (jsonl, appended)")->required();

    CLI::App* report = app.add_subcommand("report", "aggregate results into a report");
    report->add_option("--results", results_path, "results file (jsonl)")->required();
    report->add_option("--format", format_name, "table|csv|json");
    report->add_option("--out", out_path, "write report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (validate->parsed()) return cmd_validate_config(config_path);
        if (build->parsed()) return cmd_build_dataset(config_path, out_path);
        if (serve->parsed()) return cmd_serve_exfil(bind, log_path);
        if (run->parsed()) return cmd_run(config_path, trials_path, results_path);
        if (report->parsed()) return cmd_report(results_path, format_name, out_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
