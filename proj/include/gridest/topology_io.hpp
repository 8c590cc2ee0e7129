#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <toml.hpp>

#include "gridest/topology.hpp"

namespace gridest {

/// Malformed or invalid configuration document. The message carries the
/// source name and line of the offending field when known.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// IEEE 14-bus test case connectivity (standard 20-line list). Branch
/// impedances are all j1.0 p.u. in this model, so only the graph matters.
inline constexpr std::string_view kIeee14Preset = R"(# IEEE 14-bus test case (connectivity only)
buses = 14
branches = [
  [1, 2], [1, 5], [2, 3], [2, 4], [2, 5],
  [3, 4], [4, 5], [4, 7], [4, 9], [5, 6],
  [6, 11], [6, 12], [6, 13], [7, 8], [7, 9],
  [9, 10], [9, 14], [10, 11], [12, 13], [13, 14],
]
noise_variance = 0.001
)";

inline std::optional<std::string_view> preset_document(std::string_view name) {
    if (name == "ieee14") return kIeee14Preset;
    return std::nullopt;
}

namespace detail {

inline std::string where(std::string_view source, toml::node const& node) {
    std::ostringstream os;
    os << source;
    if (auto const line = node.source().begin.line; line > 0) os << ":" << line;
    return os.str();
}

[[noreturn]] inline void fail(std::string_view source, toml::node const& node, std::string const& what) {
    throw ConfigError(where(source, node) + ": " + what);
}

inline toml::table parse_document(std::string_view text, std::string_view source) {
    try {
        return toml::parse(text, source);
    } catch (toml::parse_error const& e) {
        std::ostringstream os;
        os << source << ":" << e.source().begin.line << ": " << e.description();
        throw ConfigError(os.str());
    }
}

/// Rejects any key of `table` not listed in `allowed`.
inline void reject_unknown_keys(toml::table const& table, std::set<std::string_view> const& allowed,
                                std::string_view source) {
    for (auto const& [key, node] : table) {
        if (!allowed.contains(key.str())) {
            fail(source, node, "unknown key '" + std::string(key.str()) + "'");
        }
    }
}

inline std::int64_t as_integer(toml::node const& node, std::string_view key, std::string_view source) {
    if (auto v = node.value_exact<std::int64_t>()) return *v;
    fail(source, node, "'" + std::string(key) + "' must be an integer");
}

inline double as_real(toml::node const& node, std::string_view key, std::string_view source) {
    if (auto v = node.value<double>()) return *v;
    fail(source, node, "'" + std::string(key) + "' must be a number");
}

inline toml::array const& as_array(toml::node const& node, std::string_view key, std::string_view source) {
    if (auto const* a = node.as_array()) return *a;
    fail(source, node, "'" + std::string(key) + "' must be an array");
}

inline std::vector<double> real_list(toml::node const& node, std::string_view key, std::string_view source) {
    std::vector<double> out;
    for (auto const& item : as_array(node, key, source)) out.push_back(as_real(item, key, source));
    return out;
}

/// One-based bus number in [1, num_buses], returned zero-based.
inline BusIndex bus_number(toml::node const& node, std::size_t num_buses, std::string_view key,
                           std::string_view source) {
    auto const v = as_integer(node, key, source);
    if (v < 1 || static_cast<std::uint64_t>(v) > num_buses) {
        fail(source, node, "unknown bus " + std::to_string(v) + " in '" + std::string(key) + "'");
    }
    return static_cast<BusIndex>(v - 1);
}

inline std::string read_file(std::filesystem::path const& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace detail

/// Parses a topology document:
///
///     buses = 3
///     branches = [[1, 2], [2, 3]]
///     noise_variance = 0.001            # global value, and/or
///     noise_variance_per_bus = [...]    # per-bus values, missing tail -> global
///     areas = [[1, 2], [3]]             # optional, default one area per bus
///
/// Bus numbers are one-based. Unknown keys are errors.
inline Topology load_topology(std::string_view text, std::string_view source = "<topology>") {
    auto const doc = detail::parse_document(text, source);
    detail::reject_unknown_keys(doc, {"buses", "branches", "noise_variance", "noise_variance_per_bus", "areas"},
                                source);

    auto const* buses_node = doc.get("buses");
    if (!buses_node) throw ConfigError(std::string(source) + ": missing required key 'buses'");
    auto const buses = detail::as_integer(*buses_node, "buses", source);
    if (buses < 1) detail::fail(source, *buses_node, "'buses' must be positive");
    auto const num_buses = static_cast<std::size_t>(buses);

    std::vector<Branch> branches;
    std::set<Branch> seen;
    if (auto const* node = doc.get("branches")) {
        for (auto const& item : detail::as_array(*node, "branches", source)) {
            auto const* pair = item.as_array();
            if (!pair || pair->size() != 2) detail::fail(source, item, "each branch must be a pair [from, to]");
            Branch b{detail::bus_number(*pair->get(0), num_buses, "branches", source),
                     detail::bus_number(*pair->get(1), num_buses, "branches", source)};
            if (b.from == b.to) detail::fail(source, item, "self-loop branch at bus " + std::to_string(b.from + 1));
            if (b.from > b.to) std::swap(b.from, b.to);
            if (!seen.insert(b).second) {
                detail::fail(source, item,
                             "duplicate branch (" + std::to_string(b.from + 1) + "," + std::to_string(b.to + 1) + ")");
            }
            branches.push_back(b);
        }
    }

    std::optional<double> global;
    if (auto const* node = doc.get("noise_variance")) global = detail::as_real(*node, "noise_variance", source);
    std::vector<double> variance;
    if (auto const* node = doc.get("noise_variance_per_bus")) {
        variance = detail::real_list(*node, "noise_variance_per_bus", source);
        if (variance.size() > num_buses) {
            detail::fail(source, *node, "'noise_variance_per_bus' has more entries than buses");
        }
        if (variance.size() < num_buses && !global) {
            detail::fail(source, *node, "'noise_variance_per_bus' is incomplete and no 'noise_variance' default given");
        }
    } else if (!global) {
        throw ConfigError(std::string(source) + ": missing 'noise_variance' or 'noise_variance_per_bus'");
    }
    variance.resize(num_buses, global.value_or(0.0));

    std::vector<std::vector<BusIndex>> areas;
    if (auto const* node = doc.get("areas")) {
        for (auto const& item : detail::as_array(*node, "areas", source)) {
            std::vector<BusIndex> area;
            for (auto const& bus : detail::as_array(item, "areas", source)) {
                area.push_back(detail::bus_number(bus, num_buses, "areas", source));
            }
            areas.push_back(std::move(area));
        }
    }

    try {
        return Topology(num_buses, std::move(branches), std::move(variance), std::move(areas));
    } catch (TopologyError const& e) {
        throw ConfigError(std::string(source) + ": " + e.what());
    }
}

/// Loads a preset by name, otherwise treats `source` as a file path resolved
/// against `base_dir`.
inline Topology resolve_topology(std::string const& source, std::filesystem::path const& base_dir = {}) {
    if (auto preset = preset_document(source)) return load_topology(*preset, source);
    std::filesystem::path path(source);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return load_topology(detail::read_file(path), path.string());
}

}  // namespace gridest
