#include "dipoleforge/io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "dipoleforge/errors.hpp"

namespace dipoleforge {

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size())
{
    if (header.empty()) throw std::logic_error("CsvTable: empty header");
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (k) text_ += ',';
        text_ += quote(header[k]);
    }
    text_ += '\n';
}

std::string CsvTable::quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json to_json(const PotentialSpec& spec)
{
    return {{"a2_V_per_m2", spec.a2},
            {"a3_V_per_m3", spec.a3},
            {"a4_V_per_m4", spec.a4},
            {"d_m", spec.d},
            {"omega_h_prime_rad_s", spec.omega_h_prime}};
}

PotentialSpec potential_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) throw InputError("potential", "expected an object");
    auto number = [&](const char* key) {
        if (!j.contains(key)) throw InputError(key, "missing");
        if (!j.at(key).is_number()) throw InputError(key, "expected a number");
        const double v = j.at(key).get<double>();
        if (!std::isfinite(v)) throw InputError(key, "must be finite");
        return v;
    };
    PotentialSpec s;
    s.a2 = number("a2_V_per_m2");
    s.a3 = number("a3_V_per_m3");
    s.a4 = number("a4_V_per_m4");
    s.d = number("d_m");
    s.omega_h_prime = number("omega_h_prime_rad_s");
    if (!(s.a4 > 0.0)) throw InputError("a4_V_per_m4", "must be positive to confine the electron");
    if (!(s.d > 0.0)) throw InputError("d_m", "must be positive");
    if (!(s.omega_h_prime > 0.0)) throw InputError("omega_h_prime_rad_s", "must be positive");
    return s;
}

}  // namespace dipoleforge
