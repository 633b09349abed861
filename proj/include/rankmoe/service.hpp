#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rankmoe/model.hpp"

namespace rankmoe {

struct RankCandidate {
    std::string talent_id;
    std::string resume_text;
};

struct RankRequest {
    std::string recruiter_id;
    Role role = Role::SA;
    std::string query_id;
    std::string jd_text;
    std::vector<RankCandidate> candidates;
    std::vector<std::string> history_talent_ids;
};

struct RankedCandidate {
    std::string talent_id;
    double p_ctr = 0.0, p_cvr = 0.0, p_relv = 0.0, final_score = 0.0;
};

inline RankRequest parse_rank_request(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw data_error("request must be a JSON object");
    RankRequest r;
    try {
        r.recruiter_id = j.at("recruiter_id").get<std::string>();
        r.role = role_from_name(j.at("role").get<std::string>());
        r.query_id = j.at("query_id").get<std::string>();
        r.jd_text = j.value("jd_text", std::string());
        if (j.contains("history_talent_ids"))
            r.history_talent_ids = j.at("history_talent_ids").get<std::vector<std::string>>();
        if (!j.contains("candidates") || !j.at("candidates").is_array())
            throw data_error("candidates must be an array");
        for (const auto& c : j.at("candidates")) {
            RankCandidate cand;
            cand.talent_id = c.at("talent_id").get<std::string>();
            cand.resume_text = c.value("resume_text", std::string());
            if (cand.talent_id.empty()) throw data_error("candidate talent_id must be nonempty");
            r.candidates.push_back(std::move(cand));
        }
    } catch (const data_error&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(std::string("bad request field: ") + e.what());
    }
    if (r.candidates.empty()) throw data_error("candidates must be nonempty");
    return r;
}

// Candidates become one synthetic record each, sharing the request's context.
// There is no job id on the wire; the JD text carries the job signal, and
// the job-id lookup (used only by the no-JD variants) maps to the unknown row.
template <typename T>
std::vector<RankedCandidate> score_request(const Model<T>& model, const RankRequest& req) {
    std::vector<RankedCandidate> out;
    out.reserve(req.candidates.size());
    for (const auto& cand : req.candidates) {
        InteractionRecord rec;
        rec.recruiter_id = req.recruiter_id;
        rec.role = req.role;
        rec.query_id = req.query_id;
        rec.talent_id = cand.talent_id;
        rec.jd_text = req.jd_text;
        rec.resume_text = cand.resume_text;
        rec.history_talent_ids = req.history_talent_ids;
        rec.session_id = "serve";
        Predictions p = model.predict(rec);
        out.push_back({cand.talent_id, p.p_ctr, p.p_cvr, p.p_relv, p.score});
    }
    std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.final_score != b.final_score) return a.final_score > b.final_score;
        return a.talent_id < b.talent_id;
    });
    return out;
}

namespace detail {

inline std::string fmt_score(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace detail

// Wire scores carry 9 significant digits; string fields go through the JSON
// library so escaping stays correct for arbitrary ids.
inline std::string rank_response_json(const std::vector<RankedCandidate>& ranked) {
    std::string out = "{\"results\":[";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (i) out += ',';
        out += "{\"talent_id\":";
        out += nlohmann::json(ranked[i].talent_id).dump();
        out += ",\"p_ctr\":" + detail::fmt_score(ranked[i].p_ctr);
        out += ",\"p_cvr\":" + detail::fmt_score(ranked[i].p_cvr);
        out += ",\"p_relv\":" + detail::fmt_score(ranked[i].p_relv);
        out += ",\"final_score\":" + detail::fmt_score(ranked[i].final_score);
        out += '}';
    }
    out += "]}";
    return out;
}

inline std::string error_response_json(const std::string& code, const std::string& message) {
    nlohmann::ordered_json j;
    j["code"] = code;
    j["message"] = message;
    return j.dump();
}

// One request line in, one response line out; never throws.
template <typename T>
std::string handle_rank_line(const Model<T>& model, const std::string& line) {
    try {
        RankRequest req = parse_rank_request(line);
        return rank_response_json(score_request(model, req));
    } catch (const data_error& e) {
        return error_response_json("bad_request", e.what());
    } catch (const std::exception& e) {
        return error_response_json("internal", e.what());
    }
}

// Minimal TCP line server: one handler thread per connection, newline-framed
// requests, FIFO within a connection. The handler must be safe to call from
// many threads at once.
class LineServer {
public:
    using Handler = std::function<std::string(const std::string&)>;

    LineServer(std::string host, int port, Handler handler)
        : host_(std::move(host)), port_(port), handler_(std::move(handler)) {}

    ~LineServer() { stop(); }

    // Binds and starts accepting. Returns the bound port (resolves port 0).
    int start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw data_error("socket() failed");
        int on = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &on, sizeof on);

        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port_));
        std::string host = host_ == "localhost" ? "127.0.0.1" : host_;
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw usage_error("cannot parse listen address '" + host_ + "' (IPv4 or localhost)");
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw data_error("cannot bind " + host_ + ":" + std::to_string(port_));
        }
        if (::listen(listen_fd_, 64) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw data_error("listen() failed");
        }
        sockaddr_in bound{};
        socklen_t blen = sizeof bound;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &blen);
        port_ = ntohs(bound.sin_port);
        running_ = true;
        accept_thread_ = std::thread([this] { accept_loop(); });
        return port_;
    }

    int port() const { return port_; }

    void stop() {
        bool was = running_.exchange(false);
        if (listen_fd_ >= 0) {
            ::shutdown(listen_fd_, SHUT_RDWR);
            ::close(listen_fd_);
            listen_fd_ = -1;
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
        }
        if (was && accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> workers;
        {
            std::lock_guard<std::mutex> lock(mu_);
            workers.swap(client_threads_);
        }
        for (auto& t : workers)
            if (t.joinable()) t.join();
    }

    // Blocks until stop() is called from another thread.
    void wait() {
        if (accept_thread_.joinable()) accept_thread_.join();
    }

private:
    void accept_loop() {
        while (running_) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (!running_) break;
                continue;
            }
            std::lock_guard<std::mutex> lock(mu_);
            client_fds_.push_back(fd);
            client_threads_.emplace_back([this, fd] { serve_connection(fd); });
        }
    }

    void serve_connection(int fd) {
        std::string pending;
        char buf[4096];
        for (;;) {
            ssize_t n = ::read(fd, buf, sizeof buf);
            if (n <= 0) break;
            pending.append(buf, static_cast<std::size_t>(n));
            std::size_t nl;
            while ((nl = pending.find('\n')) != std::string::npos) {
                std::string line = pending.substr(0, nl);
                pending.erase(0, nl + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty()) continue;
                std::string reply = handler_(line);
                reply += '\n';
                if (!write_all(fd, reply)) {
                    ::close(fd);
                    forget(fd);
                    return;
                }
            }
        }
        ::close(fd);
        forget(fd);
    }

    static bool write_all(int fd, const std::string& s) {
        std::size_t off = 0;
        while (off < s.size()) {
            ssize_t n = ::write(fd, s.data() + off, s.size() - off);
            if (n <= 0) return false;
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    void forget(int fd) {
        std::lock_guard<std::mutex> lock(mu_);
        for (auto it = client_fds_.begin(); it != client_fds_.end(); ++it)
            if (*it == fd) {
                client_fds_.erase(it);
                break;
            }
    }

    std::string host_;
    int port_;
    Handler handler_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<int> client_fds_;
    std::vector<std::thread> client_threads_;
};

}  // namespace rankmoe
