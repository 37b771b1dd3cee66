#pragma once

// Run configuration files: `key = value` lines grouped under `[table]`
// headers, `#` comments. Values are quoted strings, numbers, booleans or
// flat arrays of those.

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "cpinn/nonlinear.hpp"
#include "cpinn/problems/expression.hpp"

namespace cpinn {

struct ConfigValue {
    using Scalar = std::variant<double, std::string, bool>;
    std::vector<Scalar> items;
    bool is_array = false;
    int line = 0;
};

/// Parsed file: "table.key" -> value. Top-level keys have no prefix.
class ConfigDoc {
public:
    static ConfigDoc parse(const std::string& text) {
        ConfigDoc doc;
        std::istringstream in(text);
        std::string raw, table;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const std::string s = trim(strip_comment(raw));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']' || s.size() < 3) throw ConfigError("malformed table header '" + s + "'", line);
                table = trim(s.substr(1, s.size() - 2));
                if (!valid_key(table)) throw ConfigError("invalid table name '" + table + "'", line);
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + s + "'", line);
            const std::string key = trim(s.substr(0, eq));
            if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'", line);
            const std::string full = table.empty() ? key : table + "." + key;
            if (doc.values_.count(full)) throw ConfigError("duplicate key '" + full + "'", line);
            ConfigValue v = parse_value(trim(s.substr(eq + 1)), line);
            v.line = line;
            doc.values_[full] = std::move(v);
            doc.order_.push_back(full);
        }
        return doc;
    }

    static ConfigDoc load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    int line(const std::string& key) const { return has(key) ? values_.at(key).line : 0; }

    std::string str(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
        const auto* v = scalar(key, fallback.has_value());
        if (!v) return *fallback;
        if (const auto* s = std::get_if<std::string>(v)) return *s;
        throw ConfigError("'" + key + "' must be a string", line(key));
    }

    double num(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        const auto* v = scalar(key, fallback.has_value());
        if (!v) return *fallback;
        if (const auto* d = std::get_if<double>(v)) return *d;
        throw ConfigError("'" + key + "' must be a number", line(key));
    }

    long integer(const std::string& key, std::optional<long> fallback = std::nullopt) const {
        if (!has(key) && fallback) return *fallback;
        const double d = num(key);
        if (d != std::floor(d) || std::abs(d) > 9e15) throw ConfigError("'" + key + "' must be an integer", line(key));
        return static_cast<long>(d);
    }

    bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) const {
        const auto* v = scalar(key, fallback.has_value());
        if (!v) return *fallback;
        if (const auto* b = std::get_if<bool>(v)) return *b;
        throw ConfigError("'" + key + "' must be true or false", line(key));
    }

    std::vector<double> numbers(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing key '" + key + "'");
        const auto& v = values_.at(key);
        std::vector<double> out;
        for (const auto& item : v.items) {
            const auto* d = std::get_if<double>(&item);
            if (!d) throw ConfigError("'" + key + "' must hold numbers", v.line);
            out.push_back(*d);
        }
        return out;
    }

    /// Keys in file order.
    const std::vector<std::string>& keys() const { return order_; }

    /// Rejects keys outside `allowed`, pointing at the offending line.
    void restrict_to(const std::vector<std::string>& allowed) const {
        for (const auto& k : order_) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
                throw ConfigError("unknown key '" + k + "'", line(k));
            }
        }
    }

private:
    static std::string strip_comment(const std::string& s) {
        bool quoted = false;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] == '"') quoted = !quoted;
            if (s[i] == '#' && !quoted) return s.substr(0, i);
        }
        return s;
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static bool valid_key(const std::string& k) {
        if (k.empty()) return false;
        for (char c : k) {
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
        }
        return true;
    }

    static ConfigValue::Scalar parse_scalar(const std::string& s, int line) {
        if (s.empty()) throw ConfigError("missing value", line);
        if (s.front() == '"') {
            if (s.size() < 2 || s.back() != '"') throw ConfigError("unterminated string " + s, line);
            return s.substr(1, s.size() - 2);
        }
        if (s == "true") return true;
        if (s == "false") return false;
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size()) throw ConfigError("cannot parse value '" + s + "' (strings need quotes)", line);
        return d;
    }

    static ConfigValue parse_value(const std::string& s, int line) {
        ConfigValue v;
        if (!s.empty() && s.front() == '[') {
            if (s.back() != ']') throw ConfigError("unterminated array", line);
            v.is_array = true;
            const std::string body = trim(s.substr(1, s.size() - 2));
            if (body.empty()) return v;
            std::string item;
            bool quoted = false;
            for (char c : body + ",") {
                if (c == '"') quoted = !quoted;
                if (c == ',' && !quoted) {
                    v.items.push_back(parse_scalar(trim(item), line));
                    item.clear();
                } else {
                    item += c;
                }
            }
            return v;
        }
        v.items.push_back(parse_scalar(s, line));
        return v;
    }

    const ConfigValue::Scalar* scalar(const std::string& key, bool optional) const {
        const auto it = values_.find(key);
        if (it == values_.end()) {
            if (optional) return nullptr;
            throw ConfigError("missing key '" + key + "'");
        }
        if (it->second.is_array || it->second.items.size() != 1) {
            throw ConfigError("'" + key + "' must be a single value", it->second.line);
        }
        return &it->second.items.front();
    }

    std::map<std::string, ConfigValue> values_;
    std::vector<std::string> order_;
};

enum class RunMode { kCordes, kPlain, kBoth };

struct LandscapeRequest {
    double half_width = 1.0;
    int grid = 41;
    std::uint64_t seed = 1;
};

struct RunConfig {
    std::string problem;
    std::optional<ProblemSpec> custom;  // inline problem definition
    NetworkArch arch;
    LossConfig loss;
    TrainConfig train;
    RunMode mode = RunMode::kCordes;
    std::string output = "runs/out";
    double warmup_fraction = 0.2;
    int outer_iterations = 4;
    double eigen_floor = 1e-6;
    WarmStart warm_start = WarmStart::kPoissonRoot;
    bool dump_field = true;
    int fd_n = 0;  // > 0: also solve the FD reference at this resolution
    std::optional<LandscapeRequest> landscape;
    int pushforward_samples = 100000;

    ProblemSpec spec() const { return custom ? *custom : get_problem(problem); }

    OuterConfig outer() const {
        OuterConfig oc = OuterConfig::split(std::max<long>(1, train.epochs), warmup_fraction, outer_iterations);
        oc.guard.eigen_floor = eigen_floor;
        oc.warm_start = warm_start;
        return oc;
    }
};

namespace detail {

inline Domain domain_from(const ConfigDoc& doc, int dim) {
    const std::string kind = doc.str("custom.domain", std::string("rectangle"));
    auto vec = [&](const std::string& key) {
        const auto v = doc.numbers(key);
        if (static_cast<int>(v.size()) != dim) {
            throw ConfigError("'" + key + "' needs " + std::to_string(dim) + " entries", doc.line(key));
        }
        return Vec(Eigen::Map<const Vec>(v.data(), dim));
    };
    if (kind == "rectangle") return Domain::rectangle(vec("custom.lo"), vec("custom.hi"));
    if (kind == "ball") return Domain::ball(vec("custom.center"), doc.num("custom.radius"));
    if (kind == "ellipsoid") return Domain::ellipsoid(vec("custom.semi_axes"));
    throw ConfigError("unknown domain '" + kind + "' (rectangle, ball, ellipsoid)", doc.line("custom.domain"));
}

/// A linear problem written as expressions in x1..xd. Exact-solution
/// derivatives come from central differences.
inline ProblemSpec custom_problem(const ConfigDoc& doc) {
    const int d = static_cast<int>(doc.integer("custom.dim"));
    if (d < 1) throw ConfigError("custom.dim must be positive", doc.line("custom.dim"));
    auto expr = [&](const std::string& key, const char* fallback) {
        const std::string full = "custom." + key;
        if (!doc.has(full)) return fallback ? Expression::parse(fallback, d) : Expression();
        return Expression::parse(doc.str(full), d, doc.line(full));
    };
    ProblemSpec p;
    p.name = doc.str("custom.name", std::string("custom"));
    p.description = "user-defined linear problem";
    p.domain = domain_from(doc, d);

    std::vector<Expression> a(static_cast<std::size_t>(d * d)), b(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            const std::string key = "a" + std::to_string(i + 1) + std::to_string(j + 1);
            a[static_cast<std::size_t>(i * d + j)] = expr(key, i == j ? "1" : "0");
            a[static_cast<std::size_t>(j * d + i)] = a[static_cast<std::size_t>(i * d + j)];
        }
        b[static_cast<std::size_t>(i)] = expr("b" + std::to_string(i + 1), "0");
    }
    const Expression c = expr("c", "0");
    p.lower_order = doc.has("custom.c");
    for (int i = 0; i < d; ++i) p.lower_order = p.lower_order || doc.has("custom.b" + std::to_string(i + 1));
    p.coefficients = [a, b, c, d](const Vec& x) {
        CoefficientSample s;
        s.A.resize(d, d);
        s.b.resize(d);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) s.A(i, j) = a[static_cast<std::size_t>(i * d + j)](x);
            s.b[i] = b[static_cast<std::size_t>(i)](x);
        }
        s.c = c(x);
        return s;
    };
    const Expression exact = expr("exact", nullptr);
    if (!exact.empty()) {
        p.exact = [exact](const Vec& x) {
            JetValue j = finite_diff_jet([&exact](const Vec& y) { return exact(y); }, x, 1e-4);
            j.value = exact(x);
            return j;
        };
    }
    if (doc.has("custom.f")) {
        const Expression f = expr("f", nullptr);
        p.source = [f](const Vec& x) { return f(x); };
    } else if (p.exact) {
        p.source = detail::source_from_exact(p.coefficients, p.exact);
    } else {
        throw ConfigError("custom problem needs 'f' or 'exact'");
    }
    if (doc.has("custom.g")) {
        const Expression g = expr("g", nullptr);
        p.boundary = [g](const Vec& x) { return g(x); };
    } else if (!exact.empty()) {
        p.boundary = [exact](const Vec& x) { return exact(x); };
    } else {
        throw ConfigError("custom problem needs 'g' or 'exact'");
    }
    return p;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "problem", "mode", "epochs", "seed", "output", "eval_every", "eval_resolution", "lr", "precision", "timing",
        "dump_field", "fd_n", "pushforward_samples", "network.hidden", "loss.w_int", "loss.w_bc", "loss.delta",
        "loss.n_interior", "loss.n_boundary", "outer.warmup_fraction", "outer.iterations", "outer.eigen_floor",
        "outer.warm_start", "landscape.half_width", "landscape.grid", "landscape.seed", "custom.name", "custom.dim",
        "custom.domain", "custom.lo", "custom.hi", "custom.center", "custom.radius", "custom.semi_axes", "custom.a11",
        "custom.a12", "custom.a13", "custom.a22", "custom.a23", "custom.a33", "custom.b1", "custom.b2", "custom.b3",
        "custom.c", "custom.f", "custom.g", "custom.exact"};
    return keys;
}

inline RunConfig parse_run_config(const ConfigDoc& doc) {
    doc.restrict_to(config_keys());
    RunConfig rc;
    if (doc.has("custom.dim")) {
        rc.custom = detail::custom_problem(doc);
        rc.problem = rc.custom->name;
    } else {
        rc.problem = doc.str("problem");
        try {
            get_problem(rc.problem);
        } catch (const RegistryError& e) {
            throw RegistryError(e.what(), doc.line("problem"));
        }
    }

    const std::string mode = doc.str("mode", std::string("cordes"));
    if (mode == "cordes") rc.mode = RunMode::kCordes;
    else if (mode == "plain") rc.mode = RunMode::kPlain;
    else if (mode == "both") rc.mode = RunMode::kBoth;
    else throw ConfigError("mode must be cordes, plain or both", doc.line("mode"));

    rc.train.epochs = doc.integer("epochs", 20000);
    if (rc.train.epochs < 0) throw ConfigError("epochs must be non-negative", doc.line("epochs"));
    const long seed = doc.integer("seed", 0);
    if (seed < 0) throw ConfigError("seed must be non-negative", doc.line("seed"));
    rc.train.seed = static_cast<std::uint64_t>(seed);
    rc.output = doc.str("output", std::string("runs/") + rc.problem);
    rc.train.eval_every = doc.integer("eval_every", 500);
    if (rc.train.eval_every <= 0) throw ConfigError("eval_every must be positive", doc.line("eval_every"));
    rc.train.eval_resolution = static_cast<int>(doc.integer("eval_resolution", 200));
    if (rc.train.eval_resolution < 2) throw ConfigError("eval_resolution must be at least 2", doc.line("eval_resolution"));
    rc.train.lr = doc.num("lr", 3e-4);
    if (!(rc.train.lr > 0.0)) throw ConfigError("lr must be positive", doc.line("lr"));
    const std::string precision = doc.str("precision", std::string("single"));
    if (precision == "single") rc.train.precision = Precision::kSingle;
    else if (precision == "double") rc.train.precision = Precision::kDouble;
    else throw ConfigError("precision must be single or double", doc.line("precision"));
    rc.train.timing = doc.boolean("timing", true);
    rc.dump_field = doc.boolean("dump_field", true);
    rc.fd_n = static_cast<int>(doc.integer("fd_n", 0));
    rc.pushforward_samples = static_cast<int>(doc.integer("pushforward_samples", 100000));

    const ProblemSpec spec = rc.spec();
    std::vector<int> hidden = {32, 32, 32};
    if (doc.has("network.hidden")) {
        hidden.clear();
        for (double w : doc.numbers("network.hidden")) {
            if (w != std::floor(w) || w < 1) throw InvalidArchitecture("hidden widths must be positive integers", doc.line("network.hidden"));
            hidden.push_back(static_cast<int>(w));
        }
        if (hidden.empty()) throw InvalidArchitecture("at least one hidden layer is required", doc.line("network.hidden"));
    }
    rc.arch = NetworkArch{spec.dim(), hidden, Activation::kTanh};

    rc.loss.w_int = doc.num("loss.w_int", 1.0);
    rc.loss.w_bc = doc.num("loss.w_bc", 100.0);
    rc.loss.delta = doc.num("loss.delta", kDefaultDelta);
    rc.loss.n_interior = doc.integer("loss.n_interior", 10000);
    rc.loss.n_boundary = doc.integer("loss.n_boundary", 1000);
    try {
        rc.loss.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.what(), doc.line("loss.w_int"));
    }

    rc.warmup_fraction = doc.num("outer.warmup_fraction", 0.2);
    rc.outer_iterations = static_cast<int>(doc.integer("outer.iterations", 4));
    rc.eigen_floor = doc.num("outer.eigen_floor", 1e-6);
    const std::string ws = doc.str("outer.warm_start", std::string("poisson-root"));
    if (ws == "poisson-root") rc.warm_start = WarmStart::kPoissonRoot;
    else if (ws == "quadratic") rc.warm_start = WarmStart::kQuadratic;
    else throw ConfigError("warm_start must be poisson-root or quadratic", doc.line("outer.warm_start"));
    if (rc.warmup_fraction < 0.0 || rc.warmup_fraction > 1.0 || rc.outer_iterations < 0 || rc.eigen_floor < 0.0) {
        throw ConfigError("invalid [outer] settings", doc.line("outer.warmup_fraction"));
    }

    if (doc.has("landscape.grid") || doc.has("landscape.half_width") || doc.has("landscape.seed")) {
        LandscapeRequest lr;
        lr.half_width = doc.num("landscape.half_width", 1.0);
        lr.grid = static_cast<int>(doc.integer("landscape.grid", 41));
        lr.seed = static_cast<std::uint64_t>(doc.integer("landscape.seed", 1));
        if (lr.grid < 1 || !(lr.half_width >= 0.0)) throw ConfigError("invalid [landscape] settings", doc.line("landscape.grid"));
        rc.landscape = lr;
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(ConfigDoc::load(path)); }

}  // namespace cpinn
