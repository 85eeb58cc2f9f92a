#pragma once

#include <stdexcept>
#include <string>

namespace wasscopos {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind { io, config, solver, internal };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    const char* kind_name() const {
        switch (kind_) {
            case ErrorKind::io: return "io";
            case ErrorKind::config: return "config";
            case ErrorKind::solver: return "solver";
            case ErrorKind::internal: return "internal";
        }
        return "internal";
    }

private:
    ErrorKind kind_;
};

inline Error io_error(std::string msg) { return Error(ErrorKind::io, std::move(msg)); }
inline Error config_error(std::string msg) { return Error(ErrorKind::config, std::move(msg)); }
inline Error solver_error(std::string msg) { return Error(ErrorKind::solver, std::move(msg)); }
inline Error internal_error(std::string msg) { return Error(ErrorKind::internal, std::move(msg)); }

}  // namespace wasscopos
