#include "xpia/exfil_server.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "xpia/util.hpp"

namespace xpia {

namespace {

std::string utc_now_iso8601() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const std::time_t secs = system_clock::to_time_t(now);
    const auto millis = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                  static_cast<int>(millis));
    return buf;
}

}  // namespace

std::string exfil_record_to_json_line(const exfil_record& rec) {
    nlohmann::json j;
    j["seq"] = rec.seq;
    j["received_at"] = rec.received_at;
    j["trial_id"] = rec.trial_id;
    j["body"] = rec.body;
    j["remote"] = rec.remote;
    return j.dump();
}

exfil_record exfil_record_from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    exfil_record rec;
    rec.seq = j.at("seq").get<uint64_t>();
    rec.received_at = j.at("received_at").get<std::string>();
    rec.trial_id = j.at("trial_id").get<std::string>();
    rec.body = j.at("body").get<std::string>();
    rec.remote = j.at("remote").get<std::string>();
    return rec;
}

std::vector<exfil_record> replay_exfil_log(const std::filesystem::path& path) {
    std::vector<exfil_record> records;
    for (const std::string& line : split_lines(read_text_file(path))) {
        if (trim(line).empty()) continue;
        records.push_back(exfil_record_from_json_line(line));
    }
    return records;
}

exfil_server::exfil_server(std::string host, int port, std::filesystem::path log_path)
    : host_(std::move(host)), port_(port), log_path_(std::move(log_path)),
      server_(std::make_unique<httplib::Server>()) {}

exfil_server::~exfil_server() {
    shutdown();
}

void exfil_server::start() {
    disk_log_.open(log_path_, std::ios::binary | std::ios::app);
    if (!disk_log_.is_open()) {
        throw std::runtime_error("exfil server: cannot open log file " + log_path_.string());
    }

    // One exclusive listener per port: the default options include
    // SO_REUSEPORT, which would let a second instance bind silently and
    // split the traffic.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes),
                   sizeof(yes));
    });

    server_->Post("/exfil", [this](const httplib::Request& req, httplib::Response& res) {
        exfil_record rec;
        rec.received_at = utc_now_iso8601();
        rec.trial_id = req.get_header_value("X-Trial-Id");
        rec.body = req.body;
        rec.remote = req.remote_addr + ":" + std::to_string(req.remote_port);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            rec.seq = next_seq_++;
            disk_log_ << exfil_record_to_json_line(rec) << '\n';
            disk_log_.flush();
            log_.push_back(std::move(rec));
        }
        res.status = 200;
        res.set_content("", "text/plain");
    });
    server_->Get("/records", [this](const httplib::Request&, httplib::Response& res) {
        std::string out;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            for (const exfil_record& rec : log_) {
                out += exfil_record_to_json_line(rec);
                out += '\n';
            }
        }
        res.status = 200;
        res.set_content(out, "application/x-ndjson");
    });

    if (port_ == 0) {
        port_ = server_->bind_to_any_port(host_);
        if (port_ <= 0) {
            throw std::runtime_error("exfil server: failed to bind an ephemeral port on " + host_);
        }
    } else {
        if (!server_->bind_to_port(host_, port_)) {
            throw std::runtime_error("exfil server: failed to bind " + host_ + ":" +
                                     std::to_string(port_));
        }
    }
    serve_thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    running_ = true;
}

uint64_t exfil_server::shutdown() {
    if (running_) {
        server_->stop();
        if (serve_thread_.joinable()) serve_thread_.join();
        running_ = false;
    }
    std::lock_guard<std::mutex> lock(mutex_);
    if (disk_log_.is_open()) {
        disk_log_.flush();
        disk_log_.close();
    }
    return log_.size();
}

std::vector<exfil_record> exfil_server::records() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

uint64_t exfil_server::record_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_.size();
}

std::string exfil_server::base_url() const {
    return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace xpia
