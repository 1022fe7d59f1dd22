#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "camtraj/util.hpp"

namespace camtraj {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Key-value run configuration: defaults, overlaid by an optional config file,
// overlaid by command-line overrides. Unknown keys are errors, and the fully
// resolved config is serialized next to every run's outputs.
class RunConfig {
public:
    explicit RunConfig(std::map<std::string, std::string> defaults)
        : values_(std::move(defaults)) {}

    void load_file(const std::filesystem::path& path) {
        std::istringstream in(read_file(path));
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected key=value");
            set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)),
                path.string() + ":" + std::to_string(lineno));
        }
    }

    void set(const std::string& key, const std::string& value, const std::string& where = "override") {
        auto it = values_.find(key);
        if (it == values_.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
        it->second = value;
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
        return it->second;
    }

    std::string required(const std::string& key) const {
        const std::string& v = str(key);
        if (v.empty()) throw ConfigError("key '" + key + "' must be set");
        return v;
    }

    long long integer(const std::string& key) const {
        try {
            size_t pos = 0;
            const long long v = std::stoll(str(key), &pos);
            if (pos != str(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected integer, got '" + str(key) + "'");
        }
    }

    std::uint64_t unsigned64(const std::string& key) const {
        try {
            size_t pos = 0;
            const std::uint64_t v = std::stoull(str(key), &pos);
            if (pos != str(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected unsigned integer, got '" + str(key) + "'");
        }
    }

    double real(const std::string& key) const {
        try {
            size_t pos = 0;
            const double v = std::stod(str(key), &pos);
            if (pos != str(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "': expected number, got '" + str(key) + "'");
        }
    }

    bool boolean(const std::string& key) const {
        const std::string& v = str(key);
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw ConfigError("key '" + key + "': expected 0/1/true/false, got '" + v + "'");
    }

    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        std::istringstream in(str(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        return out;
    }

    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> out;
        for (const std::string& s : list(key)) {
            try {
                out.push_back(std::stod(s));
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "': expected number list, got '" + str(key) + "'");
            }
        }
        return out;
    }

    // Canonical serialization: sorted key=value lines.
    std::string resolved() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
        return out.str();
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

// Run directory named by the resolved-config hash and the seed, so identical
// configurations land in identical locations.
inline std::filesystem::path make_run_dir(const std::filesystem::path& out_base,
                                          const std::string& command, const RunConfig& cfg,
                                          std::uint64_t seed) {
    const std::string name =
        command + "-" + hex16(fnv1a64(cfg.resolved())) + "-s" + std::to_string(seed);
    const std::filesystem::path dir = out_base / name;
    std::filesystem::create_directories(dir);
    return dir;
}

class CsvWriter {
public:
    explicit CsvWriter(std::string header) { out_ << header << '\n'; }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

}  // namespace camtraj
