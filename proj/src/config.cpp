#include "sp4d/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace sp4d {

namespace {

struct Entry {
    std::string key;
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (...) {
        throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::string unquote(std::string v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
    return v;
}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> r;
        auto add_str = [&r](const char* key, std::string Config::* f) {
            r.push_back({key, [f](const Config& c) { return "\"" + c.*f + "\""; },
                         [f](Config& c, const std::string& v) { c.*f = unquote(v); }});
        };
        auto add_dbl = [&r](const char* key, auto field_ref) {
            r.push_back({key,
                         [field_ref](const Config& c) { return fmt_double(field_ref(const_cast<Config&>(c))); },
                         [key, field_ref](Config& c, const std::string& v) {
                             field_ref(c) = parse_double(key, v);
                         }});
        };
        auto add_int = [&r](const char* key, auto field_ref) {
            r.push_back({key,
                         [field_ref](const Config& c) {
                             return std::to_string(field_ref(const_cast<Config&>(c)));
                         },
                         [key, field_ref](Config& c, const std::string& v) {
                             field_ref(c) = static_cast<std::remove_reference_t<decltype(field_ref(c))>>(
                                 parse_int(key, v));
                         }});
        };
        auto add_bool = [&r](const char* key, auto field_ref) {
            r.push_back({key,
                         [field_ref](const Config& c) {
                             return field_ref(const_cast<Config&>(c)) ? "true" : "false";
                         },
                         [key, field_ref](Config& c, const std::string& v) {
                             field_ref(c) = parse_bool(key, v);
                         }});
        };
#define FIELD(expr) [](Config& c) -> auto& { return expr; }
        add_str("dataset.path", &Config::dataset_path);
        add_str("output.dir", &Config::out_dir);

        add_int("train.iterations", FIELD(c.train.iterations));
        add_dbl("train.base_lr", FIELD(c.train.base_lr));
        add_dbl("train.lr_position", FIELD(c.train.lr_position));
        add_dbl("train.lr_position_final", FIELD(c.train.lr_position_final));
        add_dbl("train.lr_rotor", FIELD(c.train.lr_rotor));
        add_dbl("train.lr_scales", FIELD(c.train.lr_scales));
        add_dbl("train.lr_opacity", FIELD(c.train.lr_opacity));
        add_dbl("train.lr_sh", FIELD(c.train.lr_sh));
        add_dbl("train.lr_phases", FIELD(c.train.lr_phases));
        add_int("train.warmup", FIELD(c.train.warmup));
        add_int("train.densify_interval", FIELD(c.train.densify_interval));
        add_dbl("train.densify_grad_threshold", FIELD(c.train.densify_grad_threshold));
        add_dbl("train.prune_opacity", FIELD(c.train.prune_opacity));
        add_dbl("train.split_scale_fraction", FIELD(c.train.split_scale_fraction));
        add_dbl("train.densify_until_fraction", FIELD(c.train.densify_until_fraction));
        add_int("train.max_gaussians", FIELD(c.train.max_gaussians));
        add_int("train.seed", FIELD(c.train.seed));
        add_int("train.eval_interval", FIELD(c.train.eval_interval));
        add_int("train.threads", FIELD(c.train.threads));
        add_dbl("train.time_cull_threshold", FIELD(c.train.time_cull_threshold));
        add_int("train.sh_unlock_interval", FIELD(c.train.sh_unlock_interval));
        add_int("train.init_count", FIELD(c.train.init_count));

        add_dbl("loss.lambda_ssim", FIELD(c.loss.lambda_ssim));
        add_dbl("loss.lambda_enac", FIELD(c.loss.lambda_enac));
        add_dbl("loss.lambda_depth", FIELD(c.loss.lambda_depth));
        add_dbl("loss.eps_alpha", FIELD(c.loss.eps_alpha));
        add_bool("loss.enac_detach_depth", FIELD(c.loss.enac_detach_depth));

        add_int("appearance.sh_degree", FIELD(c.appearance.sh_degree));
        add_int("appearance.temporal_bands", FIELD(c.appearance.temporal_bands));
        add_dbl("appearance.period", FIELD(c.appearance.period));

        add_int("synthetic.gaussians", FIELD(c.synthetic.gaussians));
        r.push_back({"synthetic.motion",
                     [](const Config& c) { return "\"" + c.synthetic.motion + "\""; },
                     [](Config& c, const std::string& v) { c.synthetic.motion = unquote(v); }});
        add_int("synthetic.width", FIELD(c.synthetic.width));
        add_int("synthetic.height", FIELD(c.synthetic.height));
        add_int("synthetic.frames", FIELD(c.synthetic.frames));
        add_int("synthetic.seed", FIELD(c.synthetic.seed));
#undef FIELD
        return r;
    }();
    return entries;
}

const Entry& find_entry(const std::string& key) {
    for (const Entry& e : registry())
        if (e.key == key) return e;
    throw std::runtime_error("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config load_config(const std::string& path) {
    Config cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        find_entry(key).set(cfg, value);
    }
    return cfg;
}

void apply_overrides(Config& cfg, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects key=value, got '" + s + "'");
        find_entry(trim(s.substr(0, eq))).set(cfg, trim(s.substr(eq + 1)));
    }
}

std::string serialize_config(const Config& cfg) {
    std::ostringstream out;
    std::string section;
    for (const Entry& e : registry()) {
        const auto dot = e.key.find('.');
        const std::string sec = e.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << e.key.substr(dot + 1) << " = " << e.get(cfg) << "\n";
    }
    return out.str();
}

}  // namespace sp4d
