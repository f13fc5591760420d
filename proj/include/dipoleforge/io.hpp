#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "dipoleforge/potential.hpp"

namespace dipoleforge {

/// In-memory CSV table: header row, comma separated, shortest round-trip
/// formatting for doubles.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    template <class... Ts>
    void row(const Ts&... values)
    {
        static_assert(sizeof...(Ts) > 0);
        if (sizeof...(Ts) != columns_) throw std::logic_error("CsvTable: row width does not match the header");
        std::size_t k = 0;
        ((text_ += (k++ ? "," : ""), append(values)), ...);
        text_ += '\n';
        ++rows_;
    }

    /// Pre-formatted row; the caller guarantees the column count.
    void raw_row(const std::string& line)
    {
        text_ += line;
        text_ += '\n';
        ++rows_;
    }

    std::size_t rows() const { return rows_; }
    std::size_t columns() const { return columns_; }
    const std::string& text() const { return text_; }

private:
    template <class T>
    void append(const T& v)
    {
        if constexpr (std::is_floating_point_v<T>)
            text_ += fmt::format("{}", v);
        else if constexpr (std::is_integral_v<T>)
            text_ += fmt::format("{}", v);
        else
            text_ += quote(std::string(v));
    }
    static std::string quote(const std::string& s);

    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string text_;
};

/// Writes to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

nlohmann::json to_json(const PotentialSpec& spec);
PotentialSpec potential_from_json(const nlohmann::json& j);

}  // namespace dipoleforge
