#include "xpia/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "xpia/util.hpp"

namespace xpia {

const char* to_string(prompt_class cls) {
    switch (cls) {
        case prompt_class::injection_only: return "InjectionOnly";
        case prompt_class::injection_with_suffix: return "InjectionWithSuffix";
        case prompt_class::clean_only: return "CleanOnly";
        case prompt_class::suffix_only: return "SuffixOnly";
    }
    return "?";
}

std::optional<prompt_class> prompt_class_from_string(std::string_view name) {
    for (prompt_class cls : all_prompt_classes()) {
        if (name == to_string(cls)) return cls;
    }
    return std::nullopt;
}

const std::vector<prompt_class>& all_prompt_classes() {
    static const std::vector<prompt_class> classes = {
        prompt_class::injection_only,
        prompt_class::injection_with_suffix,
        prompt_class::clean_only,
        prompt_class::suffix_only,
    };
    return classes;
}

static const char* kind_prefix(corpus_kind kind) {
    switch (kind) {
        case corpus_kind::base_task: return "task";
        case corpus_kind::injection: return "injection";
        case corpus_kind::suffix: return "suffix";
    }
    return "?";
}

std::vector<corpus_record> import_corpus(const std::filesystem::path& path, corpus_kind kind) {
    const std::string content = read_text_file(path);
    const std::vector<std::string> lines = split_lines(content);

    std::vector<corpus_record> records;
    std::unordered_set<std::string> seen_ids;
    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (trim(line).empty()) continue;

        corpus_record rec;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            rec.id = std::string(kind_prefix(kind)) + ":" + std::to_string(records.size());
            rec.text = line;
        } else {
            rec.id = line.substr(0, tab);
            rec.text = line.substr(tab + 1);
            if (rec.id.empty() || rec.text.empty()) {
                throw std::runtime_error(path.string() + ": malformed line " +
                                         std::to_string(i + 1) + " (empty id or text)");
            }
        }
        if (!seen_ids.insert(rec.id).second) {
            throw std::runtime_error(path.string() + ": duplicate id '" + rec.id +
                                     "' at line " + std::to_string(i + 1));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

static std::string substitute_marker(const std::string& base_document, const std::string& payload) {
    size_t count = count_occurrences(base_document, kInjectMarker);
    if (count == 0) {
        throw std::runtime_error("document template lacks the {INJECT} insertion marker");
    }
    if (count > 1) {
        throw std::runtime_error("document template contains multiple {INJECT} markers");
    }
    return replace_all(base_document, kInjectMarker, payload);
}

std::string compose_injected_document(const std::string& base_document,
                                      const std::string& injection_text,
                                      const std::optional<std::string>& suffix_text) {
    std::string payload = injection_text;
    if (suffix_text.has_value()) {
        payload += " ";
        payload += *suffix_text;
    }
    return substitute_marker(base_document, payload);
}

std::string render_trial_document(const std::string& template_text, prompt_class cls,
                                  const std::optional<std::string>& injection_text,
                                  const std::optional<std::string>& suffix_text) {
    switch (cls) {
        case prompt_class::injection_only:
            if (!injection_text) throw std::runtime_error("InjectionOnly trial without injection text");
            return compose_injected_document(template_text, *injection_text, std::nullopt);
        case prompt_class::injection_with_suffix:
            if (!injection_text) throw std::runtime_error("InjectionWithSuffix trial without injection text");
            if (!suffix_text) throw std::runtime_error("InjectionWithSuffix trial without suffix text");
            return compose_injected_document(template_text, *injection_text, suffix_text);
        case prompt_class::clean_only:
            return substitute_marker(template_text, "");
        case prompt_class::suffix_only:
            if (!suffix_text) throw std::runtime_error("SuffixOnly trial without suffix text");
            return substitute_marker(template_text, *suffix_text);
    }
    throw std::runtime_error("unknown prompt class");
}

std::string make_trial_id(const std::string& model_id, prompt_class cls,
                          const std::string& base_task_id, const std::string& injection_id,
                          const std::string& suffix_id, const std::string& template_id) {
    // JSON-array encoding keeps field boundaries unambiguous regardless of
    // what characters the ids contain.
    nlohmann::json fields = nlohmann::json::array(
        {model_id, to_string(cls), base_task_id, injection_id, suffix_id, template_id});
    return to_hex16(fnv1a64(fields.dump()));
}

static bool class_uses_injection(prompt_class cls) {
    return cls == prompt_class::injection_only || cls == prompt_class::injection_with_suffix;
}

static bool class_uses_suffix(prompt_class cls) {
    return cls == prompt_class::injection_with_suffix || cls == prompt_class::suffix_only;
}

std::vector<trial_spec> build_trials(const std::vector<std::string>& model_ids,
                                     const std::vector<prompt_class>& classes,
                                     const std::vector<corpus_record>& tasks,
                                     const std::vector<corpus_record>& injections,
                                     const std::vector<corpus_record>& suffixes,
                                     const std::string& template_id) {
    if (model_ids.empty()) throw std::runtime_error("build_trials: no models configured");
    if (classes.empty()) throw std::runtime_error("build_trials: no prompt classes requested");
    if (tasks.empty()) throw std::runtime_error("build_trials: base task corpus is empty");

    for (prompt_class cls : classes) {
        if (class_uses_injection(cls) && injections.empty()) {
            throw std::runtime_error(std::string("build_trials: class ") + to_string(cls) +
                                     " requested but injection corpus is empty");
        }
        if (class_uses_suffix(cls) && suffixes.empty()) {
            throw std::runtime_error(std::string("build_trials: class ") + to_string(cls) +
                                     " requested but suffix corpus is empty");
        }
    }

    auto sorted_ids = [](const std::vector<corpus_record>& records) {
        std::vector<std::string> ids;
        ids.reserve(records.size());
        for (const auto& r : records) ids.push_back(r.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    std::vector<std::string> models = model_ids;
    std::sort(models.begin(), models.end());
    const std::vector<std::string> task_ids = sorted_ids(tasks);
    const std::vector<std::string> injection_ids = sorted_ids(injections);
    const std::vector<std::string> suffix_ids = sorted_ids(suffixes);

    // Requested classes in canonical order, duplicates dropped.
    std::vector<prompt_class> ordered_classes;
    for (prompt_class cls : all_prompt_classes()) {
        if (std::find(classes.begin(), classes.end(), cls) != classes.end()) {
            ordered_classes.push_back(cls);
        }
    }

    static const std::string kNone;
    std::vector<trial_spec> trials;
    for (const std::string& model : models) {
        for (prompt_class cls : ordered_classes) {
            const std::vector<std::string>& inj_dim =
                class_uses_injection(cls) ? injection_ids : std::vector<std::string>{kNone};
            const std::vector<std::string>& suf_dim =
                class_uses_suffix(cls) ? suffix_ids : std::vector<std::string>{kNone};
            for (const std::string& task : task_ids) {
                for (const std::string& inj : inj_dim) {
                    for (const std::string& suf : suf_dim) {
                        trial_spec t;
                        t.model_id = model;
                        t.cls = cls;
                        t.base_task_id = task;
                        t.injection_id = inj;
                        t.suffix_id = suf;
                        t.document_template_id = template_id;
                        t.trial_id = make_trial_id(model, cls, task, inj, suf, template_id);
                        trials.push_back(std::move(t));
                    }
                }
            }
        }
    }
    return trials;
}

std::string trial_to_json_line(const trial_spec& trial) {
    nlohmann::json j;
    j["trial_id"] = trial.trial_id;
    j["model_id"] = trial.model_id;
    j["class"] = to_string(trial.cls);
    j["base_task_id"] = trial.base_task_id;
    j["injection_id"] = trial.injection_id;
    j["suffix_id"] = trial.suffix_id;
    j["document_template_id"] = trial.document_template_id;
    return j.dump();
}

trial_spec trial_from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    trial_spec t;
    t.trial_id = j.at("trial_id").get<std::string>();
    t.model_id = j.at("model_id").get<std::string>();
    auto cls = prompt_class_from_string(j.at("class").get<std::string>());
    if (!cls) throw std::runtime_error("unknown prompt class in trial record: " + j.at("class").get<std::string>());
    t.cls = *cls;
    t.base_task_id = j.at("base_task_id").get<std::string>();
    t.injection_id = j.at("injection_id").get<std::string>();
    t.suffix_id = j.at("suffix_id").get<std::string>();
    t.document_template_id = j.at("document_template_id").get<std::string>();
    return t;
}

void write_trials(const std::filesystem::path& path, const std::vector<trial_spec>& trials) {
    std::string out;
    for (const trial_spec& t : trials) {
        out += trial_to_json_line(t);
        out += '\n';
    }
    write_text_file(path, out);
}

std::vector<trial_spec> read_trials(const std::filesystem::path& path) {
    const std::string content = read_text_file(path);
    std::vector<trial_spec> trials;
    for (const std::string& line : split_lines(content)) {
        if (trim(line).empty()) continue;
        trials.push_back(trial_from_json_line(line));
    }
    return trials;
}

}  // namespace xpia
