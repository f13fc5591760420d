#pragma once

#include <stdexcept>
#include <string>

namespace dipoleforge {

/// Invalid user input. `field` names the offending parameter so the CLI can
/// report it in its error JSON.
class InputError : public std::invalid_argument {
public:
    InputError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field))
    {
    }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A numerical gate refused to run (resolution gate, dt gate, norm drift...).
/// `hint` carries the remediation, e.g. the required number of grid points.
class Refusal : public std::runtime_error {
public:
    Refusal(std::string gate, const std::string& what, std::string hint = {})
        : std::runtime_error(gate + ": " + what), gate_(std::move(gate)), hint_(std::move(hint))
    {
    }
    const std::string& gate() const noexcept { return gate_; }
    const std::string& hint() const noexcept { return hint_; }

private:
    std::string gate_;
    std::string hint_;
};

}  // namespace dipoleforge
