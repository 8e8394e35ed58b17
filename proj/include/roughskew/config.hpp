#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace roughskew::harness {

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Flat dotted-key configuration: "section.key = value" lines, '#' comments.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse(std::istream& is) {
        KvConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                const auto e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            const std::string t = trim(line);
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected 'key = value', got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": empty key");
            cfg.raw_[key] = val;
        }
        return cfg;
    }

    static KvConfig parse_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::invalid_argument("config file not found: " + path);
        return parse(is);
    }

    void set(const std::string& key, const std::string& value) { raw_[key] = value; }
    bool has(const std::string& key) const { return raw_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        consumed_.insert(key);
        auto it = raw_.find(key);
        const std::string v = it == raw_.end() ? fallback : it->second;
        resolved_[key] = v;
        return v;
    }

    double get_double(const std::string& key, double fallback) const {
        consumed_.insert(key);
        auto it = raw_.find(key);
        double v = fallback;
        if (it != raw_.end()) {
            try {
                std::size_t pos = 0;
                v = std::stod(it->second, &pos);
                if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw std::invalid_argument("config key '" + key + "': cannot parse '" +
                                            it->second + "' as a real number");
            }
        }
        resolved_[key] = fmt17(v);
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        consumed_.insert(key);
        auto it = raw_.find(key);
        std::uint64_t v = fallback;
        if (it != raw_.end()) {
            try {
                std::size_t pos = 0;
                v = std::stoull(it->second, &pos);
                if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw std::invalid_argument("config key '" + key + "': cannot parse '" +
                                            it->second + "' as an unsigned integer");
            }
        }
        resolved_[key] = std::to_string(v);
        return v;
    }

    // All numeric keys under "<prefix>." except explicitly excluded ones.
    std::map<std::string, double> get_group(const std::string& prefix,
                                            const std::set<std::string>& exclude) const {
        std::map<std::string, double> out;
        for (const auto& [key, val] : raw_) {
            if (key.rfind(prefix + ".", 0) != 0) continue;
            const std::string leaf = key.substr(prefix.size() + 1);
            if (exclude.count(leaf)) continue;
            out[leaf] = get_double(key, 0.0);
        }
        return out;
    }

    void reject_unknown_keys() const {
        std::vector<std::string> unknown;
        for (const auto& [key, val] : raw_)
            if (!consumed_.count(key)) unknown.push_back(key);
        if (!unknown.empty()) {
            std::ostringstream os;
            os << "config contains unrecognized keys:";
            for (const auto& k : unknown) os << " '" << k << "'";
            throw std::invalid_argument(os.str());
        }
    }

    // Resolved (post-default) view, for the echo file.
    const std::map<std::string, std::string>& resolved() const { return resolved_; }

private:
    std::map<std::string, std::string> raw_;
    mutable std::map<std::string, std::string> resolved_;
    mutable std::set<std::string> consumed_;
};

struct ExperimentConfig {
    std::string model_name = "rough-bounded";
    std::map<std::string, double> model_params;
    double theta_min = 1e-4;
    double theta_max = 1e-1;
    std::size_t theta_count = 8;
    double z = 0.1;
    double zeta = -0.1;
    std::size_t n_paths = 50000;
    std::size_t steps_per_theta = 50;
    std::uint64_t seed = 20260816;
    bool resample_bank = true;
    std::size_t quad_nodes = 200;
    double quad_beta_min = 1e-6;
    double quad_beta_max = 1e6;
    double init_s = 1.0;
    double init_y = 0.0;
    std::string out_dir = "run-output";
    int threads = 0;
    std::map<std::string, std::string> echo;

    static ExperimentConfig resolve(const KvConfig& kv) {
        ExperimentConfig c;
        c.model_name = kv.get_str("model.name", c.model_name);
        c.model_params = kv.get_group("model", {"name"});
        c.theta_min = kv.get_double("theta.min", c.theta_min);
        c.theta_max = kv.get_double("theta.max", c.theta_max);
        c.theta_count = kv.get_u64("theta.count", c.theta_count);
        c.z = kv.get_double("strikes.z", c.z);
        c.zeta = kv.get_double("strikes.zeta", c.zeta);
        c.n_paths = kv.get_u64("mc.n_paths", c.n_paths);
        c.steps_per_theta = kv.get_u64("mc.steps_per_theta", c.steps_per_theta);
        c.seed = kv.get_u64("mc.seed", c.seed);
        c.resample_bank = kv.get_u64("mc.resample_bank", c.resample_bank ? 1 : 0) != 0;
        c.quad_nodes = kv.get_u64("quadrature.n_nodes", c.quad_nodes);
        c.quad_beta_min = kv.get_double("quadrature.beta_min", c.quad_beta_min);
        c.quad_beta_max = kv.get_double("quadrature.beta_max", c.quad_beta_max);
        c.init_s = kv.get_double("init.s", c.init_s);
        c.init_y = kv.get_double("init.y", c.init_y);
        c.out_dir = kv.get_str("output.dir", c.out_dir);
        c.threads = static_cast<int>(kv.get_u64("run.threads", 0));
        c.validate();
        c.echo = kv.resolved();
        return c;
    }

    void validate() const {
        if (!(theta_min > 0.0) || !(theta_max >= theta_min))
            throw std::invalid_argument(
                "config: require 0 < theta.min <= theta.max, got theta.min=" +
                fmt17(theta_min) + " theta.max=" + fmt17(theta_max));
        if (theta_count < 1) throw std::invalid_argument("config: theta.count must be >= 1");
        if (z == zeta) throw std::invalid_argument("config: strikes.z must differ from strikes.zeta");
        if (n_paths < 100)
            throw std::invalid_argument("config: mc.n_paths must be at least 100");
        if (steps_per_theta < 1)
            throw std::invalid_argument("config: mc.steps_per_theta must be >= 1");
        if (quad_nodes < 2) throw std::invalid_argument("config: quadrature.n_nodes must be >= 2");
        if (!(quad_beta_min > 0.0 && quad_beta_min < quad_beta_max))
            throw std::invalid_argument("config: require 0 < quadrature.beta_min < beta_max");
        if (!(init_s > 0.0)) throw std::invalid_argument("config: init.s must be positive");
    }

    std::vector<double> theta_grid() const {
        std::vector<double> grid(theta_count);
        if (theta_count == 1) {
            grid[0] = theta_min;
            return grid;
        }
        const double ratio = std::log(theta_max / theta_min) /
                             static_cast<double>(theta_count - 1);
        for (std::size_t i = 0; i < theta_count; ++i)
            grid[i] = theta_min * std::exp(ratio * static_cast<double>(i));
        return grid;
    }

    // Constant steps-per-maturity rule: dt never exceeds theta/steps_per_theta,
    // keeping relative time discretization flat across the sweep.
    std::size_t n_steps_for(double theta) const {
        const double delta_max = theta / static_cast<double>(steps_per_theta);
        const double need = std::ceil(theta / delta_max);
        return std::max<std::size_t>(steps_per_theta, static_cast<std::size_t>(need));
    }
};

} // namespace roughskew::harness
