#pragma once

#include <stdexcept>
#include <string>

namespace hiercva {

// Invalid user-supplied configuration (parameters, files, CLI flags).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke a documented precondition.
class contract_error : public std::logic_error {
public:
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// A computation became numerically meaningless (degenerate annuity,
// undefined metric, NaN loss, ...).
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hiercva
