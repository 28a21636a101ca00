#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "xpia/call_parser.hpp"
#include "xpia/corpus.hpp"

namespace xpia {

// Everything that goes into the system prompt: the declared plug-in, the
// planted credential, the attacker endpoint handed to the model, and the
// non-disclosure instruction.
struct system_prompt_spec {
    function_signature signature;
    std::string credential;
    std::string attacker_endpoint;
    std::string nondisclosure_clause;
    std::string template_text;  // must contain {SIGNATURE} {CREDENTIAL} {ENDPOINT} {NONDISCLOSURE}
};

std::string default_system_prompt_template();

// Substitutes the template placeholders. Throws when a placeholder is
// missing or when the rendered prompt does not contain the credential and
// endpoint exactly once each.
std::string render_system_prompt(const system_prompt_spec& spec);

struct chat_message {
    std::string role;  // "system" or "user"
    std::string content;
};

struct chat_request {
    std::string model_id;
    std::vector<chat_message> messages;  // system first, then exactly one user message
    double temperature = 0.0;
    int max_tokens = 512;
};

// Minimal trial context a backend may condition on. Scripted responses are a
// pure function of it plus the request content, so runs are reproducible.
struct trial_context {
    std::string trial_id;
    prompt_class cls = prompt_class::injection_only;
};

struct backend_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class model_backend {
  public:
    virtual ~model_backend() = default;
    // Returns the completion text. Throws backend_error when the trial
    // should be marked errored; other exceptions indicate configuration
    // problems and abort the run.
    virtual std::string complete(const chat_request& request, const trial_context& trial) = 0;
};

// Deterministic bucket in [0, 10) derived from the trial id; used by mock
// policy selectors to split trials into fixed-rate groups.
int trial_bucket(const std::string& trial_id);

enum class mock_response_kind { refusal, compliance_python, compliance_json, off_task };

struct mock_policy_row {
    std::string cls;       // prompt class name or "*"
    int bucket_ge = 0;     // inclusive
    int bucket_lt = 10;    // exclusive
    mock_response_kind kind = mock_response_kind::off_task;
    std::string template_text;  // empty = built-in template for `kind`
};

struct mock_policy_table {
    std::vector<mock_policy_row> rows;  // first match wins, in file order
};

// Line-delimited JSON rows: {"class": "...", "bucket_ge": n, "bucket_lt": n,
// "respond": "...", "template": "..."} with class/buckets/template optional.
mock_policy_table load_mock_policy(const std::filesystem::path& path);

// True when some row matches every (class, bucket) combination.
bool mock_policy_is_total(const mock_policy_table& table);

// Scripted stand-in for a hosted model. Response templates may reference
// {CREDENTIAL} and {ENDPOINT}, filled from the run configuration.
class scripted_mock_backend : public model_backend {
  public:
    scripted_mock_backend(mock_policy_table table, std::string credential,
                          std::string attacker_endpoint);

    std::string complete(const chat_request& request, const trial_context& trial) override;

    // Exposed for tests: the completion text a policy row produces.
    std::string render_response(const mock_policy_row& row) const;

  private:
    mock_policy_table table_;
    std::string credential_;
    std::string attacker_endpoint_;
};

struct remote_chat_options {
    std::string base_url;          // e.g. http://127.0.0.1:8080 or .../v1
    std::string api_key_env_name;  // resolved from the environment, never stored in files
    int retries = 3;               // additional attempts on 429/5xx/transport errors
    int backoff_initial_ms = 250;  // doubled per retry
    int timeout_seconds = 60;
};

// Client for the common chat-completions wire protocol: POST
// {base_url}/chat/completions with {model, messages, temperature,
// max_tokens}, reading choices[0].message.content. Retries 429/5xx and
// transport failures with exponential backoff; other statuses fail at once.
class remote_chat_backend : public model_backend {
  public:
    // Throws std::runtime_error when the key environment variable is unset.
    explicit remote_chat_backend(remote_chat_options options);

    std::string complete(const chat_request& request, const trial_context& trial) override;

  private:
    remote_chat_options options_;
    std::string api_key_;
    std::string host_;
    int port_ = 0;
    std::string path_prefix_;
};

}  // namespace xpia
