#pragma once

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <string>

namespace rankmoe {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Process-wide logging state. Level comes from RANK_MOE_LOG on first use;
// the CLI may override timestamps (tests compare log bytes across runs).
struct Logger {
    LogLevel level = LogLevel::info;
    bool timestamps = true;
    std::ostream* sink = &std::cerr;

    static Logger& instance() {
        static Logger g = [] {
            Logger l;
            if (const char* env = std::getenv("RANK_MOE_LOG")) {
                std::string v(env);
                if (v == "error")
                    l.level = LogLevel::error;
                else if (v == "debug")
                    l.level = LogLevel::debug;
                else
                    l.level = LogLevel::info;
            }
            return l;
        }();
        return g;
    }

    void write(LogLevel lv, const std::string& msg) {
        if (lv > level) return;
        std::string line;
        if (timestamps) {
            std::time_t now = std::time(nullptr);
            char buf[32];
            std::tm tm_utc{};
            gmtime_r(&now, &tm_utc);
            std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
            line += buf;
            line += ' ';
        }
        line += lv == LogLevel::error ? "[error] " : lv == LogLevel::debug ? "[debug] " : "[info] ";
        line += msg;
        line += '\n';
        (*sink) << line << std::flush;
    }
};

inline void log_error(const std::string& msg) { Logger::instance().write(LogLevel::error, msg); }
inline void log_info(const std::string& msg) { Logger::instance().write(LogLevel::info, msg); }
inline void log_debug(const std::string& msg) { Logger::instance().write(LogLevel::debug, msg); }

}  // namespace rankmoe
