#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "romcert/learn.hpp"
#include "romcert/pde.hpp"

namespace romcert {

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream stream(text);
    std::string word;
    while (stream >> word) words.push_back(word);
    return words;
}

} // namespace detail

inline double parse_double(const std::string& text, const std::string& what) {
    const std::string t = detail::trim(text);
    double value = 0.0;
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(what + ": not a number: '" + text + "'");
    return value;
}

inline std::int64_t parse_count(const std::string& text, const std::string& what) {
    const std::string t = detail::trim(text);
    std::int64_t value = 0;
    const char* end = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(t.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw ConfigError(what + ": not an integer: '" + text + "'");
    return value;
}

/// Flat key = value file with [section] headers. Comments start with '#'.
/// The canonical form (sections and keys sorted) is what gets hashed, so
/// reordering a config does not invalidate artifacts but editing one does.
class ConfigFile {
public:
    using Section = std::map<std::string, std::string>;

    static ConfigFile parse(std::istream& in, const std::string& origin = "<config>") {
        ConfigFile file;
        std::string line;
        std::string section;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::size_t comment = line.find('#');
            if (comment != std::string::npos) line.erase(comment);
            const std::string text = detail::trim(line);
            if (text.empty()) continue;
            const std::string where = origin + ":" + std::to_string(line_no);
            if (text.front() == '[') {
                if (text.back() != ']')
                    throw ConfigError(where + ": unterminated section header");
                section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
                if (section.empty()) throw ConfigError(where + ": empty section name");
                continue;
            }
            const std::size_t eq = text.find('=');
            if (eq == std::string::npos)
                throw ConfigError(where + ": expected 'key = value'");
            if (section.empty())
                throw ConfigError(where + ": key outside of any [section]");
            const std::string key = detail::trim(std::string_view(text).substr(0, eq));
            const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
            if (key.empty()) throw ConfigError(where + ": empty key");
            if (!file.sections_[section].emplace(key, value).second)
                throw ConfigError(where + ": duplicate key '" + key + "'");
        }
        return file;
    }

    static ConfigFile parse_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file: " + path.string());
        return parse(in, path.string());
    }

    static ConfigFile parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    const std::map<std::string, Section>& sections() const { return sections_; }

    std::optional<std::string> find(const std::string& section, const std::string& key) const {
        const auto sec = sections_.find(section);
        if (sec == sections_.end()) return std::nullopt;
        const auto entry = sec->second.find(key);
        if (entry == sec->second.end()) return std::nullopt;
        return entry->second;
    }

    std::string canonical() const {
        std::string out;
        for (const auto& [name, entries] : sections_) {
            out += "[" + name + "]\n";
            for (const auto& [key, value] : entries) out += key + "=" + value + "\n";
        }
        return out;
    }

    std::uint64_t hash() const { return detail::fnv1a64(canonical()); }

private:
    std::map<std::string, Section> sections_;
};

/// Named input signal with numeric parameters and bare flags, e.g.
/// "exp_sin rate=1 waves=12" or "gauss_iid first_zero".
struct SignalSpec {
    std::string name;
    std::map<std::string, double> params;
    std::set<std::string> flags;

    static SignalSpec parse(const std::string& text) {
        const std::vector<std::string> words = detail::split_words(text);
        if (words.empty()) throw ConfigError("signal: empty specification");
        SignalSpec spec;
        spec.name = words.front();
        for (std::size_t i = 1; i < words.size(); ++i) {
            const std::size_t eq = words[i].find('=');
            if (eq == std::string::npos) {
                if (!spec.flags.insert(words[i]).second)
                    throw ConfigError("signal: duplicate flag '" + words[i] + "'");
            } else {
                const std::string key = words[i].substr(0, eq);
                if (spec.params.count(key))
                    throw ConfigError("signal: duplicate parameter '" + key + "'");
                spec.params[key] = parse_double(words[i].substr(eq + 1), "signal " + key);
            }
        }
        return spec;
    }

    double param_or(const std::string& key, double fallback) const {
        const auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
};

struct OutputSpec {
    enum class Kind { mean, flux };
    Kind kind = Kind::mean;
    Index segment = 0; // 1-based boundary segment, flux only

    std::string name() const {
        if (kind == Kind::mean) return "mean";
        return "flux" + std::to_string(segment);
    }
};

/// Everything a run needs, validated up front. Data guards that would
/// otherwise surface mid-run (like the training horizon being too short for
/// the residual-operator unknowns) are checked here, before any simulation.
struct ExperimentConfig {
    ConfigFile raw;

    std::string model_kind;
    Index heat_intervals = 0;
    double mu = 0.0;
    Index cells_x = 0, cells_y = 0;
    double velocity_x = 1.0, velocity_y = 1.0;
    std::vector<NeumannSegment> segments;
    Index dense_dofs = 0, dense_inputs = 0;
    double dense_spectral_norm = 0.0;

    double beta = 0.0;
    double dt = 0.0;
    Index basis_steps = 0, train_steps = 0, test_steps = 0;
    std::vector<Index> sizes;

    SignalSpec basis_signal, train_signal, test_signal;

    double gamma = 1.0;
    Index samples = 1;
    std::uint64_t seed = 0;
    Index reference_subsample = 1;

    std::vector<Index> at_steps;
    std::vector<OutputSpec> outputs;

    std::filesystem::path out_dir;

    Index n_inputs() const {
        if (model_kind == "heat1d") return 1;
        if (model_kind == "convdiff2d") return static_cast<Index>(segments.size());
        return dense_inputs;
    }

    Index n_max() const {
        Index m = 0;
        for (Index n : sizes) m = std::max(m, n);
        return m;
    }

    std::uint64_t hash() const { return raw.hash(); }

    static ExperimentConfig load(const ConfigFile& file);
};

namespace detail {

inline Side parse_side(const std::string& word) {
    if (word == "bottom") return Side::bottom;
    if (word == "right") return Side::right;
    if (word == "top") return Side::top;
    if (word == "left") return Side::left;
    throw ConfigError("segments: unknown side '" + word + "'");
}

inline std::vector<NeumannSegment> parse_segments(const std::string& text) {
    std::vector<NeumannSegment> segments;
    for (const std::string& word : split_words(text)) {
        const std::size_t colon = word.find(':');
        const std::size_t dash = word.find('-', colon == std::string::npos ? 0 : colon);
        if (colon == std::string::npos || dash == std::string::npos || dash < colon)
            throw ConfigError("segments: expected side:first-last, got '" + word + "'");
        NeumannSegment seg;
        seg.side = parse_side(word.substr(0, colon));
        seg.first_edge =
            parse_count(word.substr(colon + 1, dash - colon - 1), "segments first edge");
        seg.last_edge = parse_count(word.substr(dash + 1), "segments last edge");
        segments.push_back(seg);
    }
    return segments;
}

inline std::vector<Index> parse_index_list(const std::string& text, const std::string& what) {
    std::vector<Index> values;
    for (const std::string& word : split_words(text))
        values.push_back(parse_count(word, what));
    return values;
}

class SectionReader {
public:
    SectionReader(const ConfigFile& file, std::string section)
        : file_(file), section_(std::move(section)) {}

    std::optional<std::string> take(const std::string& key) {
        used_.insert(key);
        return file_.find(section_, key);
    }

    std::string require(const std::string& key) {
        auto value = take(key);
        if (!value) throw ConfigError("[" + section_ + "] missing required key '" + key + "'");
        return *value;
    }

    double require_double(const std::string& key) {
        return parse_double(require(key), "[" + section_ + "] " + key);
    }

    std::int64_t require_count(const std::string& key) {
        return parse_count(require(key), "[" + section_ + "] " + key);
    }

    void finish() const {
        const auto sec = file_.sections().find(section_);
        if (sec == file_.sections().end()) return;
        for (const auto& [key, value] : sec->second)
            if (!used_.count(key))
                throw ConfigError("[" + section_ + "] unknown key '" + key + "'");
    }

private:
    const ConfigFile& file_;
    std::string section_;
    std::set<std::string> used_;
};

} // namespace detail

/// Evaluate a signal specification into the step inputs g_1..g_K. Analytic
/// signals are sampled at the grid times and combined with the scheme weight
/// (g_{k+1} = beta u_{k+1} + (1-beta) u_k); random signals are the inputs
/// themselves and draw from the provided stream.
inline std::vector<Vector> make_signal(const SignalSpec& spec, Index steps, double dt,
                                       double beta, Index channels, RngStream rng) {
    if (steps < 0) throw DomainError("make_signal: negative step count");
    const double horizon = static_cast<double>(steps) * dt;

    auto check_keys = [&spec](std::initializer_list<const char*> params,
                              std::initializer_list<const char*> flags) {
        for (const auto& [key, value] : spec.params) {
            bool known = false;
            for (const char* p : params) known = known || key == p;
            if (!known)
                throw ConfigError("signal " + spec.name + ": unknown parameter '" + key + "'");
        }
        for (const std::string& flag : spec.flags) {
            bool known = false;
            for (const char* f : flags) known = known || flag == f;
            if (!known)
                throw ConfigError("signal " + spec.name + ": unknown flag '" + flag + "'");
        }
    };

    const double pi = 3.14159265358979323846;
    std::function<Vector(double)> analytic;

    if (spec.name == "exp_sin") {
        check_keys({"rate", "freq", "waves"}, {});
        const double rate = spec.param_or("rate", 0.0);
        const bool has_freq = spec.params.count("freq") > 0;
        const bool has_waves = spec.params.count("waves") > 0;
        if (has_freq == has_waves)
            throw ConfigError("signal exp_sin: give exactly one of freq or waves");
        double freq = 0.0;
        if (has_freq) {
            freq = spec.params.at("freq");
        } else {
            if (horizon <= 0.0)
                throw ConfigError("signal exp_sin: waves needs a positive horizon");
            freq = spec.params.at("waves") * pi / horizon;
        }
        analytic = [rate, freq, channels](double t) {
            Vector u(channels);
            for (Index j = 0; j < channels; ++j)
                u[j] = std::exp(rate * t) * std::sin(freq * static_cast<double>(j + 1) * t);
            return u;
        };
    } else if (spec.name == "mixed_five") {
        check_keys({}, {});
        if (channels != 5)
            throw ConfigError("signal mixed_five: needs exactly five input channels");
        analytic = [pi](double t) {
            Vector u(5);
            u[0] = 5.0 * t * std::sin(pi * t);
            u[1] = std::exp(5.0 * t) * std::sin(2.0 * pi * t);
            u[2] = std::sqrt(3.0 + t * t) * std::sin(3.0 * pi * t);
            u[3] = 50.0 * t * t * std::sin(4.0 * pi * t);
            u[4] = std::exp(2.0 * t) * std::sin(5.0 * pi * t);
            return u;
        };
    } else if (spec.name == "sin_randfreq") {
        check_keys({}, {});
        Vector z(channels);
        for (Index j = 0; j < channels; ++j) z[j] = rng.gaussian();
        analytic = [pi, z, channels](double t) {
            Vector u(channels);
            for (Index j = 0; j < channels; ++j)
                u[j] = std::sin(static_cast<double>(j + 1) * pi * t * z[j]);
            return u;
        };
    } else if (spec.name == "const") {
        check_keys({"value"}, {});
        const double value = spec.param_or("value", 1.0);
        analytic = [value, channels](double) { return Vector::Constant(channels, value); };
    } else if (spec.name == "zero") {
        check_keys({}, {});
        analytic = [channels](double) { return Vector(Vector::Zero(channels)); };
    } else if (spec.name == "gauss_iid") {
        check_keys({"stddev"}, {"first_zero"});
        const double stddev = spec.param_or("stddev", 1.0);
        if (stddev < 0.0) throw ConfigError("signal gauss_iid: negative stddev");
        const bool first_zero = spec.flags.count("first_zero") > 0;
        std::vector<Vector> inputs;
        inputs.reserve(static_cast<std::size_t>(steps));
        for (Index k = 0; k < steps; ++k) {
            if (k == 0 && first_zero) {
                inputs.push_back(Vector::Zero(channels));
                continue;
            }
            inputs.push_back(stddev * gaussian_vector(rng, channels));
        }
        return inputs;
    } else if (spec.name == "gauss_sinvar") {
        check_keys({}, {});
        std::vector<Vector> inputs;
        inputs.reserve(static_cast<std::size_t>(steps));
        for (Index k = 1; k <= steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            Vector g(channels);
            for (Index j = 0; j < channels; ++j)
                g[j] = std::abs(std::sin(static_cast<double>(j + 1) * pi * t)) * rng.gaussian();
            inputs.push_back(g);
        }
        return inputs;
    } else {
        throw ConfigError("signal: unknown name '" + spec.name + "'");
    }

    std::vector<Vector> inputs;
    inputs.reserve(static_cast<std::size_t>(steps));
    Vector now = analytic(0.0);
    for (Index k = 0; k < steps; ++k) {
        const Vector next = analytic(static_cast<double>(k + 1) * dt);
        inputs.push_back(beta * next + (1.0 - beta) * now);
        now = next;
    }
    return inputs;
}

inline ExperimentConfig ExperimentConfig::load(const ConfigFile& file) {
    ExperimentConfig cfg;
    cfg.raw = file;

    for (const auto& [name, entries] : file.sections()) {
        static const std::set<std::string> known{"model",  "scheme",    "horizons", "basis",
                                                "signals", "estimator", "metrics",  "run"};
        if (!known.count(name)) throw ConfigError("unknown section [" + name + "]");
    }

    {
        detail::SectionReader model(file, "model");
        cfg.model_kind = model.require("kind");
        if (cfg.model_kind == "heat1d") {
            cfg.heat_intervals = model.require_count("intervals");
            cfg.mu = model.require_double("mu");
            if (cfg.heat_intervals < 1) throw ConfigError("[model] intervals must be positive");
            if (cfg.mu <= 0.0) throw ConfigError("[model] mu must be positive");
        } else if (cfg.model_kind == "convdiff2d") {
            cfg.cells_x = model.require_count("cells_x");
            cfg.cells_y = model.require_count("cells_y");
            cfg.mu = model.require_double("mu");
            if (auto vx = model.take("velocity_x"))
                cfg.velocity_x = parse_double(*vx, "[model] velocity_x");
            if (auto vy = model.take("velocity_y"))
                cfg.velocity_y = parse_double(*vy, "[model] velocity_y");
            cfg.segments = detail::parse_segments(model.require("segments"));
            if (cfg.cells_x < 2 || cfg.cells_y < 2)
                throw ConfigError("[model] cells_x and cells_y must be at least 2");
            if (cfg.mu <= 0.0) throw ConfigError("[model] mu must be positive");
            if (cfg.segments.empty()) throw ConfigError("[model] segments must not be empty");
        } else if (cfg.model_kind == "dense_random") {
            cfg.dense_dofs = model.require_count("dofs");
            cfg.dense_inputs = model.require_count("inputs");
            cfg.dense_spectral_norm = model.require_double("spectral_norm");
            if (cfg.dense_dofs < 1 || cfg.dense_inputs < 1)
                throw ConfigError("[model] dofs and inputs must be positive");
            if (cfg.dense_spectral_norm <= 0.0)
                throw ConfigError("[model] spectral_norm must be positive");
        } else {
            throw ConfigError("[model] unknown kind '" + cfg.model_kind + "'");
        }
        model.finish();
    }

    {
        detail::SectionReader scheme(file, "scheme");
        cfg.beta = scheme.require_double("beta");
        cfg.dt = scheme.require_double("dt");
        scheme.finish();
        if (cfg.beta < 0.0 || cfg.beta > 1.0) throw ConfigError("[scheme] beta must be in [0, 1]");
        if (cfg.dt <= 0.0) throw ConfigError("[scheme] dt must be positive");
    }

    {
        detail::SectionReader horizons(file, "horizons");
        cfg.basis_steps = horizons.require_count("basis_steps");
        cfg.train_steps = horizons.require_count("train_steps");
        cfg.test_steps = horizons.require_count("test_steps");
        horizons.finish();
        if (cfg.basis_steps < 1 || cfg.train_steps < 1 || cfg.test_steps < 1)
            throw ConfigError("[horizons] all step counts must be positive");
    }

    {
        detail::SectionReader basis(file, "basis");
        cfg.sizes = detail::parse_index_list(basis.require("sizes"), "[basis] sizes");
        basis.finish();
        std::set<Index> seen;
        for (Index n : cfg.sizes) {
            if (n < 1) throw ConfigError("[basis] sizes must be positive");
            if (!seen.insert(n).second) throw ConfigError("[basis] duplicate size");
        }
    }

    {
        detail::SectionReader signals(file, "signals");
        cfg.basis_signal = SignalSpec::parse(signals.require("basis"));
        cfg.train_signal = SignalSpec::parse(signals.require("train"));
        cfg.test_signal = SignalSpec::parse(signals.require("test"));
        signals.finish();
    }

    {
        detail::SectionReader estimator(file, "estimator");
        cfg.gamma = estimator.require_double("gamma");
        cfg.samples = estimator.require_count("samples");
        const std::string seed_text = estimator.require("seed");
        const std::int64_t seed = parse_count(seed_text, "[estimator] seed");
        if (seed < 0) throw ConfigError("[estimator] seed must be nonnegative");
        cfg.seed = static_cast<std::uint64_t>(seed);
        if (auto sub = estimator.take("reference_subsample")) {
            cfg.reference_subsample = parse_count(*sub, "[estimator] reference_subsample");
            if (cfg.reference_subsample < 1)
                throw ConfigError("[estimator] reference_subsample must be positive");
        }
        estimator.finish();
        if (cfg.gamma <= 0.0) throw ConfigError("[estimator] gamma must be positive");
        if (cfg.samples < 1) throw ConfigError("[estimator] samples must be positive");
    }

    {
        detail::SectionReader metrics(file, "metrics");
        if (auto at = metrics.take("at_steps"))
            cfg.at_steps = detail::parse_index_list(*at, "[metrics] at_steps");
        else
            cfg.at_steps = {cfg.test_steps};
        if (auto outs = metrics.take("outputs")) {
            for (const std::string& word : detail::split_words(*outs)) {
                OutputSpec out;
                if (word == "mean") {
                    out.kind = OutputSpec::Kind::mean;
                } else if (word.rfind("flux:", 0) == 0) {
                    out.kind = OutputSpec::Kind::flux;
                    out.segment = parse_count(word.substr(5), "[metrics] outputs flux segment");
                    if (out.segment < 1 || out.segment > cfg.n_inputs())
                        throw ConfigError("[metrics] outputs: flux segment out of range");
                } else {
                    throw ConfigError("[metrics] outputs: unknown output '" + word + "'");
                }
                cfg.outputs.push_back(out);
            }
        }
        metrics.finish();
        for (Index k : cfg.at_steps)
            if (k < 1 || k > cfg.test_steps)
                throw ConfigError("[metrics] at_steps must lie in [1, test_steps]");
    }

    {
        detail::SectionReader run(file, "run");
        cfg.out_dir = run.require("directory");
        run.finish();
        if (cfg.out_dir.empty()) throw ConfigError("[run] directory must not be empty");
    }

    // The residual-operator regression has (n+p)(n+p+1)/2 unknowns at the
    // largest basis size; refuse the run before any simulation happens.
    if (!cfg.sizes.empty()) {
        const Index unknowns = norm_operator_unknowns(cfg.n_max(), cfg.n_inputs());
        if (cfg.train_steps < unknowns)
            throw InsufficientDataError(
                "[horizons] train_steps cannot pin the residual operators at the largest "
                "basis size",
                cfg.train_steps, unknowns);
    }

    // Surface signal problems (unknown names, bad parameters) now, with a
    // dry one-step evaluation per role.
    make_signal(cfg.basis_signal, 1, cfg.dt, cfg.beta, cfg.n_inputs(), RngStream(0, 0));
    make_signal(cfg.train_signal, 1, cfg.dt, cfg.beta, cfg.n_inputs(), RngStream(0, 0));
    make_signal(cfg.test_signal, 1, cfg.dt, cfg.beta, cfg.n_inputs(), RngStream(0, 0));

    return cfg;
}

} // namespace romcert
