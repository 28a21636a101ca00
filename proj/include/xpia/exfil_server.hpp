#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace xpia {

// One POST received by the mock attacker endpoint.
struct exfil_record {
    uint64_t seq = 0;           // strictly increasing, starts at 1
    std::string received_at;    // UTC timestamp, ISO 8601
    std::string trial_id;       // from the X-Trial-Id header; empty when absent
    std::string body;
    std::string remote;         // source address

    bool operator==(const exfil_record&) const = default;
};

std::string exfil_record_to_json_line(const exfil_record& rec);
exfil_record exfil_record_from_json_line(const std::string& line);

// Reads a disk log back into records (used for durability checks and the
// CLI). Blank lines are ignored.
std::vector<exfil_record> replay_exfil_log(const std::filesystem::path& path);

// Mock attacker endpoint. POST /exfil returns 200 and appends one record to
// the in-memory log and the on-disk line-delimited log; GET /records returns
// the full log, one JSON object per line; everything else is 404.
// The server never initiates outbound connections.
class exfil_server {
  public:
    // port 0 picks a free ephemeral port.
    exfil_server(std::string host, int port, std::filesystem::path log_path);
    ~exfil_server();

    exfil_server(const exfil_server&) = delete;
    exfil_server& operator=(const exfil_server&) = delete;

    // Binds and starts serving on a background thread. Throws on bind failure.
    void start();

    // Stops accepting, flushes the disk log, returns the final record count.
    // Safe to call more than once.
    uint64_t shutdown();

    std::vector<exfil_record> records() const;
    uint64_t record_count() const;

    int port() const { return port_; }
    std::string base_url() const;
    std::string exfil_url() const { return base_url() + "/exfil"; }

  private:
    std::string host_;
    int port_;
    std::filesystem::path log_path_;
    std::unique_ptr<httplib::Server> server_;
    std::thread serve_thread_;
    bool running_ = false;

    mutable std::mutex mutex_;
    std::vector<exfil_record> log_;
    std::ofstream disk_log_;
    uint64_t next_seq_ = 1;
};

}  // namespace xpia
