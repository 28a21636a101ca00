#include "xpia/config.hpp"

#include <algorithm>
#include <stdexcept>

#include <json.hpp>

#include "xpia/call_parser.hpp"
#include "xpia/model_gateway.hpp"
#include "xpia/util.hpp"

namespace xpia {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

experiment_config load_config(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");
    experiment_config cfg;

    if (!j.contains("models") || !j["models"].is_array() || j["models"].empty()) {
        throw std::runtime_error(path.string() + ": config requires a non-empty models[] array");
    }
    for (const nlohmann::json& m : j["models"]) {
        model_config model;
        model.id = m.at("id").get<std::string>();
        const std::string backend = m.at("backend").get<std::string>();
        if (backend == "remote_chat") {
            model.kind = backend_kind::remote_chat;
            model.base_url = m.at("base_url").get<std::string>();
            model.api_key_env = m.at("api_key_env").get<std::string>();
        } else if (backend == "scripted_mock") {
            model.kind = backend_kind::scripted_mock;
            model.policy_table = resolve(base, m.at("policy_table").get<std::string>());
        } else {
            throw std::runtime_error(path.string() + ": unknown backend '" + backend +
                                     "' for model " + model.id);
        }
        cfg.models.push_back(std::move(model));
    }

    const nlohmann::json& dataset = j.at("dataset");
    cfg.tasks_path = resolve(base, dataset.at("tasks").get<std::string>());
    cfg.injections_path = resolve(base, dataset.at("injections").get<std::string>());
    if (dataset.contains("suffixes")) {
        cfg.suffixes_path = resolve(base, dataset.at("suffixes").get<std::string>());
    }
    cfg.document_template_path = resolve(base, dataset.at("document_template").get<std::string>());
    cfg.document_template_id =
        dataset.value("document_template_id", cfg.document_template_path.filename().string());

    cfg.classes.clear();
    if (dataset.contains("classes")) {
        for (const nlohmann::json& c : dataset.at("classes")) {
            auto cls = prompt_class_from_string(c.get<std::string>());
            if (!cls) {
                throw std::runtime_error(path.string() + ": unknown prompt class '" +
                                         c.get<std::string>() + "'");
            }
            cfg.classes.push_back(*cls);
        }
    } else {
        cfg.classes = {prompt_class::injection_only, prompt_class::injection_with_suffix};
    }

    cfg.credential = j.value("credential", cfg.credential);
    cfg.attacker_endpoint = j.at("attacker_endpoint").get<std::string>();
    if (j.contains("endpoint_allowlist")) {
        cfg.endpoint_allowlist = j.at("endpoint_allowlist").get<std::vector<std::string>>();
    } else {
        cfg.endpoint_allowlist = {cfg.attacker_endpoint};
    }
    if (j.contains("refusal_markers")) {
        cfg.refusal_markers = j.at("refusal_markers").get<std::vector<std::string>>();
    }

    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    if (cfg.max_in_flight == 0) cfg.max_in_flight = 1;
    cfg.retries = j.value("retries", cfg.retries);
    cfg.retry_backoff_ms = j.value("retry_backoff_ms", cfg.retry_backoff_ms);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);

    cfg.system_prompt_template = j.value("system_prompt_template", std::string());
    if (cfg.system_prompt_template.empty()) {
        cfg.system_prompt_template = default_system_prompt_template();
    }
    cfg.nondisclosure = j.value("nondisclosure", cfg.nondisclosure);
    return cfg;
}

std::vector<std::string> validate_config(const experiment_config& cfg) {
    std::vector<std::string> problems;
    auto check_file = [&](const std::filesystem::path& p, const char* what) {
        if (p.empty()) {
            problems.push_back(std::string(what) + " path is not configured");
            return false;
        }
        if (!std::filesystem::is_regular_file(p)) {
            problems.push_back(std::string(what) + " file does not exist: " + p.string());
            return false;
        }
        return true;
    };

    const bool wants_suffixes =
        std::any_of(cfg.classes.begin(), cfg.classes.end(), [](prompt_class c) {
            return c == prompt_class::injection_with_suffix || c == prompt_class::suffix_only;
        });

    if (check_file(cfg.tasks_path, "tasks")) {
        try {
            if (import_corpus(cfg.tasks_path, corpus_kind::base_task).empty()) {
                problems.push_back("tasks corpus is empty: " + cfg.tasks_path.string());
            }
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    }
    if (check_file(cfg.injections_path, "injections")) {
        try {
            import_corpus(cfg.injections_path, corpus_kind::injection);
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    }
    if (wants_suffixes && check_file(cfg.suffixes_path, "suffixes")) {
        try {
            if (import_corpus(cfg.suffixes_path, corpus_kind::suffix).empty()) {
                problems.push_back("suffix corpus is empty but a suffix class is requested");
            }
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    }
    if (check_file(cfg.document_template_path, "document template")) {
        try {
            const std::string tpl = read_text_file(cfg.document_template_path);
            const size_t markers = count_occurrences(tpl, kInjectMarker);
            if (markers != 1) {
                problems.push_back("document template must contain exactly one {INJECT} marker, found " +
                                   std::to_string(markers));
            }
        } catch (const std::exception& e) {
            problems.push_back(e.what());
        }
    }

    if (cfg.attacker_endpoint.empty()) {
        problems.push_back("attacker_endpoint is not configured");
    } else if (!parse_url(cfg.attacker_endpoint)) {
        problems.push_back("attacker_endpoint is not a valid URL: " + cfg.attacker_endpoint);
    }
    if (std::find(cfg.endpoint_allowlist.begin(), cfg.endpoint_allowlist.end(),
                  cfg.attacker_endpoint) == cfg.endpoint_allowlist.end()) {
        problems.push_back("endpoint_allowlist does not contain the attacker endpoint");
    }

    for (const model_config& model : cfg.models) {
        if (model.kind == backend_kind::remote_chat) {
            auto url = parse_url(model.base_url);
            if (!url || url->scheme != "http") {
                problems.push_back("model " + model.id + ": base_url is not a plain http URL: " +
                                   model.base_url);
            }
            if (model.api_key_env.empty()) {
                problems.push_back("model " + model.id + ": api_key_env is not configured");
            }
        } else {
            if (check_file(model.policy_table, ("model " + model.id + " policy table").c_str())) {
                try {
                    mock_policy_table table = load_mock_policy(model.policy_table);
                    if (!mock_policy_is_total(table)) {
                        problems.push_back("model " + model.id +
                                           ": mock policy table is not total (some class/bucket "
                                           "combination has no row)");
                    }
                } catch (const std::exception& e) {
                    problems.push_back(e.what());
                }
            }
        }
    }

    try {
        system_prompt_spec spec;
        spec.signature = make_signature("send", {"body", "endpoint"});
        spec.credential = cfg.credential;
        spec.attacker_endpoint = cfg.attacker_endpoint.empty() ? "http://unset.invalid/exfil"
                                                               : cfg.attacker_endpoint;
        spec.nondisclosure_clause = cfg.nondisclosure;
        spec.template_text = cfg.system_prompt_template;
        render_system_prompt(spec);
    } catch (const std::exception& e) {
        problems.push_back(std::string("system prompt template: ") + e.what());
    }
    return problems;
}

}  // namespace xpia
