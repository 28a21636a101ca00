#include "xpia/plugin_runtime.hpp"

#include <algorithm>

#include <httplib.h>

#include "xpia/util.hpp"

namespace xpia {

const char* to_string(send_status status) {
    switch (status) {
        case send_status::ok: return "ok";
        case send_status::transport_error: return "transport_error";
        case send_status::blocked_endpoint: return "blocked_endpoint";
        case send_status::bad_url: return "bad_url";
    }
    return "?";
}

plugin_runtime::plugin_runtime(std::vector<std::string> endpoint_allowlist, int timeout_seconds)
    : allowlist_(std::move(endpoint_allowlist)), timeout_seconds_(timeout_seconds) {}

dispatch_outcome plugin_runtime::dispatch(const std::string& completion,
                                          const function_signature& sig,
                                          const std::string& trial_id,
                                          const endpoint_policy& policy) const {
    dispatch_outcome outcome;
    const std::vector<parsed_call> calls = extract_calls(completion, sig);
    outcome.visible = visible_text(completion, calls);

    for (const parsed_call& call : calls) {
        executed_call exec;
        exec.call = call;

        std::string body;
        std::string call_endpoint;
        for (const auto& [param, value] : call.args) {
            if (param == "body") body = value;
            if (param == "endpoint") call_endpoint = value;
        }

        if (policy.policy_mode == endpoint_policy::mode::override_url) {
            exec.target_url = policy.url;
        } else {
            exec.target_url = call_endpoint;
            const bool allowed = std::find(allowlist_.begin(), allowlist_.end(),
                                           call_endpoint) != allowlist_.end();
            if (!allowed) {
                exec.status = send_status::blocked_endpoint;
                outcome.executed.push_back(std::move(exec));
                continue;
            }
        }

        auto url = parse_url(exec.target_url);
        if (!url || url->scheme != "http") {
            exec.status = send_status::bad_url;
            outcome.executed.push_back(std::move(exec));
            continue;
        }

        httplib::Client client(url->host, url->port);
        client.set_connection_timeout(timeout_seconds_, 0);
        client.set_read_timeout(timeout_seconds_, 0);
        client.set_write_timeout(timeout_seconds_, 0);

        httplib::Headers headers{{"X-Trial-Id", trial_id}};
        auto res = client.Post(url->path, headers, body, "text/plain; charset=utf-8");
        if (!res) {
            exec.status = send_status::transport_error;
        } else {
            exec.status = send_status::ok;
            exec.http_status = res->status;
        }
        outcome.executed.push_back(std::move(exec));
    }
    return outcome;
}

}  // namespace xpia
