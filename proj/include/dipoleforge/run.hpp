#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dipoleforge {

inline constexpr const char* version_string = "0.1.0";

/// Everything the command line collects before a run.
struct RunRequest {
    std::string experiment;               // spectrum | scan | faquad | evolve | readout | sense
    nlohmann::json config = nlohmann::json::object();  // parsed config file, may be empty
    std::string scale_flag;               // value of --scale, empty when absent
    std::vector<std::string> overrides;   // dotted.path=value
    std::filesystem::path out;            // empty: $DIPOLEFORGE_OUT/<experiment> or runs/<experiment>
    unsigned jobs = 1;
};

const std::vector<std::string>& experiments();

/// Built-in configuration for a scale ("demo" or "paper").
nlohmann::json default_config(const std::string& scale);

/// Defaults, config file and overrides merged and checked against the
/// default schema. Unknown keys and type mismatches throw InputError naming
/// the dotted path.
nlohmann::json resolve_config(const RunRequest& request);

std::filesystem::path output_directory(const RunRequest& request);

/// Runs one experiment, writes its CSV/JSON files and manifest.json into the
/// output directory and returns the manifest.
nlohmann::json run(const RunRequest& request);

/// {"error": {...}} for an exception thrown by run().
nlohmann::json error_json(const std::exception& e);

/// Exit status for an exception: 2 input, 3 refusal, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace dipoleforge
