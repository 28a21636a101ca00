#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace xpia {

// Trial prompt classes. Experiment runs draw from injection_only and
// injection_with_suffix; clean_only and suffix_only are ablation controls.
enum class prompt_class {
    injection_only,
    injection_with_suffix,
    clean_only,
    suffix_only,
};

const char* to_string(prompt_class cls);
std::optional<prompt_class> prompt_class_from_string(std::string_view name);

// All classes in their canonical (declaration) order.
const std::vector<prompt_class>& all_prompt_classes();

enum class corpus_kind { base_task, injection, suffix };

struct corpus_record {
    std::string id;
    std::string text;
};

// Reads a line-delimited corpus file. Each non-blank line is either
// `id<TAB>text` or bare `text` (id synthesized as `<kind>:<index>`, where
// index counts records in file order). Blank lines are skipped.
// Throws std::runtime_error naming the line number for malformed lines and
// for duplicate ids.
std::vector<corpus_record> import_corpus(const std::filesystem::path& path, corpus_kind kind);

// Marker that document templates must contain exactly once.
inline constexpr const char* kInjectMarker = "{INJECT}";

// Replaces the {INJECT} marker in `base_document` with the injection text;
// when a suffix is given it is appended to the injection with a single
// space. Throws if the marker is missing or occurs more than once.
std::string compose_injected_document(const std::string& base_document,
                                      const std::string& injection_text,
                                      const std::optional<std::string>& suffix_text);

// Renders the document for any prompt class: the injection classes go
// through compose_injected_document, clean_only drops the marker, and
// suffix_only embeds the suffix alone.
std::string render_trial_document(const std::string& template_text, prompt_class cls,
                                  const std::optional<std::string>& injection_text,
                                  const std::optional<std::string>& suffix_text);

struct trial_spec {
    std::string trial_id;
    std::string model_id;
    prompt_class cls = prompt_class::injection_only;
    std::string base_task_id;
    std::string injection_id;  // empty = absent (control classes)
    std::string suffix_id;     // empty = absent
    std::string document_template_id;
};

// Deterministic id over all other trial fields, rendered as 16 hex digits.
std::string make_trial_id(const std::string& model_id, prompt_class cls,
                          const std::string& base_task_id, const std::string& injection_id,
                          const std::string& suffix_id, const std::string& template_id);

// Full cross product model x class x task x injection x (suffix where the
// class uses one), ordered by (model, class, task, injection, suffix) with
// ids compared lexicographically. Throws when a required corpus is empty.
std::vector<trial_spec> build_trials(const std::vector<std::string>& model_ids,
                                     const std::vector<prompt_class>& classes,
                                     const std::vector<corpus_record>& tasks,
                                     const std::vector<corpus_record>& injections,
                                     const std::vector<corpus_record>& suffixes,
                                     const std::string& template_id);

// Trial list export/import: one JSON object per line with all trial fields.
std::string trial_to_json_line(const trial_spec& trial);
trial_spec trial_from_json_line(const std::string& line);
void write_trials(const std::filesystem::path& path, const std::vector<trial_spec>& trials);
std::vector<trial_spec> read_trials(const std::filesystem::path& path);

}  // namespace xpia
