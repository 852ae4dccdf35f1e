#pragma once

#include <stdexcept>
#include <string>

namespace fpcim {

/// A caller broke a documented precondition (negative current, out-of-range
/// weight, dimension mismatch). CLI maps this to exit status 3.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Parameters that cannot describe a working circuit, or unreadable inputs.
/// CLI maps this to exit status 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

inline void require_config(bool cond, const std::string& what) {
    if (!cond) throw ConfigError(what);
}

} // namespace fpcim
