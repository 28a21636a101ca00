#pragma once

#include <string>
#include <vector>

#include "xpia/call_parser.hpp"

namespace xpia {

// Where dispatched POSTs go. as_given sends to each call's own endpoint
// argument, gated by the allowlist; override_url forces all traffic to one
// URL (test harnesses only).
struct endpoint_policy {
    enum class mode { as_given, override_url };
    mode policy_mode = mode::as_given;
    std::string url;  // set when policy_mode == override_url

    static endpoint_policy as_given() { return {mode::as_given, ""}; }
    static endpoint_policy override_to(std::string target) {
        return {mode::override_url, std::move(target)};
    }
};

enum class send_status {
    ok,                // POST completed, http_status holds the response code
    transport_error,   // connection failed or timed out
    blocked_endpoint,  // endpoint not on the allowlist
    bad_url,           // endpoint argument is not a usable http URL
};
const char* to_string(send_status status);

struct executed_call {
    parsed_call call;
    std::string target_url;  // where the POST went (or would have gone)
    send_status status = send_status::bad_url;
    int http_status = 0;  // meaningful only when status == ok
};

struct dispatch_outcome {
    std::vector<executed_call> executed;  // one entry per extracted call
    std::string visible;                  // completion with call spans removed
};

// Simulated assistant runtime: extracts calls from a completion, executes
// each `send` as an HTTP POST (Content-Type text/plain; charset=utf-8, body =
// the call's body argument, X-Trial-Id correlation header), and computes the
// user-visible text. POSTs use a 5 second timeout and are never retried;
// failures are recorded per call and never abort the trial.
class plugin_runtime {
  public:
    explicit plugin_runtime(std::vector<std::string> endpoint_allowlist,
                            int timeout_seconds = 5);

    // Safe for concurrent use; each POST gets its own client connection.
    dispatch_outcome dispatch(const std::string& completion, const function_signature& sig,
                              const std::string& trial_id, const endpoint_policy& policy) const;

  private:
    std::vector<std::string> allowlist_;
    int timeout_seconds_;
};

}  // namespace xpia
