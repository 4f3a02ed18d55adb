#pragma once

#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sdebridge/bridges.hpp"
#include "sdebridge/mcmc.hpp"
#include "sdebridge/model_zoo.hpp"
#include "sdebridge/sde.hpp"

namespace sdebridge {

enum class EndpointSource { Quantile, Value };

/// A full experiment description: model, grid, observation regime, endpoint
/// scenarios, bridge list and sampler settings. Parsed from (and serialised
/// to) a flat key-value text format with [section] headers.
struct ExperimentConfig {
    std::string model_name;
    VectorXd theta;
    VectorXd x0;
    double T = 1.0;
    int m = 50;
    double lna_step = 0.01;  // internal step bound for the LNA integrations

    Regime regime = Regime::Exact;
    MatrixXd F;      // noisy regime only, d x d_o
    MatrixXd Sigma;  // noisy regime only, d_o x d_o

    EndpointSource endpoint_source = EndpointSource::Quantile;
    std::vector<int> quantile_levels;      // subset of {5, 50, 95}
    std::vector<VectorXd> endpoint_values; // explicit conditioning values
    long long oracle_replicates = 200000;
    double oracle_step = 0.0;  // 0 resolves to the per-model default

    std::vector<BridgeKind> bridges;
    MhConfig mcmc;

    std::string out_dir = "out";
    bool timing = true;  // off zeroes the timing-derived CSV columns

    DiffusionModel model() const { return make_model(model_name, theta); }
    ObservationModel observation() const {
        return regime == Regime::Exact ? ObservationModel::exact(model().d)
                                       : ObservationModel::noisy(F, Sigma);
    }
};

struct ConfigError {
    int line = 0;  // 0 when not anchored to a specific line
    std::string message;
};

struct ParseResult {
    std::optional<ExperimentConfig> config;
    std::vector<ConfigError> errors;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_vector(const VectorXd& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += fmt_double(v[i]);
    }
    return out;
}

inline std::string fmt_matrix_rowmajor(const MatrixXd& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (i || j) out += ' ';
            out += fmt_double(m(i, j));
        }
    return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

/// Line-oriented parser that keeps going after errors so a bad file reports
/// everything wrong with it in one pass.
class ConfigParser {
  public:
    ParseResult parse(std::string_view text) {
        int line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const std::size_t eol = text.find('\n', pos);
            std::string_view line = text.substr(
                pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
            ++line_no;
            handle_line(line, line_no);
            if (eol == std::string_view::npos) break;
            pos = eol + 1;
        }
        finalise();
        ParseResult out;
        out.errors = std::move(errors_);
        if (out.errors.empty()) out.config = std::move(cfg_);
        return out;
    }

  private:
    void error(int line, std::string msg) { errors_.push_back({line, std::move(msg)}); }

    void handle_line(std::string_view raw, int line_no) {
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) return;
        if (line.front() == '[') {
            if (line.back() != ']') {
                error(line_no, "malformed section header");
                section_.clear();
                return;
            }
            section_ = std::string(trim(line.substr(1, line.size() - 2)));
            static const char* known[] = {"model",   "grid", "observation", "endpoint",
                                          "bridges", "mcmc", "output"};
            bool ok = false;
            for (const char* k : known) ok = ok || section_ == k;
            if (!ok) {
                error(line_no, "unknown section [" + section_ + "]");
                section_.clear();  // swallow its keys
            }
            return;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            error(line_no, "expected 'key = value'");
            return;
        }
        const std::string key{trim(line.substr(0, eq))};
        const std::string value{trim(line.substr(eq + 1))};
        if (section_.empty()) return;  // inside an unknown section
        handle_key(section_, key, value, line_no);
    }

    bool scalar_once(const std::string& key, int line_no) {
        if (seen_.count(key)) {
            error(line_no, "duplicate key '" + key + "'");
            return false;
        }
        seen_[key] = line_no;
        return true;
    }

    std::optional<double> num(const std::string& v, int line_no, const std::string& key) {
        try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("");
            return d;
        } catch (...) {
            error(line_no, key + ": expected a number, got '" + v + "'");
            return std::nullopt;
        }
    }

    std::optional<VectorXd> nums(const std::string& v, int line_no, const std::string& key) {
        const auto toks = split_ws(v);
        VectorXd out(static_cast<Eigen::Index>(toks.size()));
        for (std::size_t i = 0; i < toks.size(); ++i) {
            auto d = num(toks[i], line_no, key);
            if (!d) return std::nullopt;
            out[static_cast<Eigen::Index>(i)] = *d;
        }
        if (out.size() == 0) {
            error(line_no, key + ": expected at least one number");
            return std::nullopt;
        }
        return out;
    }

    void handle_key(const std::string& sec, const std::string& key, const std::string& value,
                    int line_no) {
        auto unknown = [&] { error(line_no, "unknown key '" + key + "' in [" + sec + "]"); };
        if (sec == "model") {
            if (key == "name" && scalar_once("model.name", line_no)) cfg_.model_name = value;
            else if (key == "theta" && scalar_once("model.theta", line_no)) {
                if (auto v = nums(value, line_no, key)) cfg_.theta = *v;
            } else if (key == "x0" && scalar_once("model.x0", line_no)) {
                if (auto v = nums(value, line_no, key)) cfg_.x0 = *v;
            } else if (key != "name" && key != "theta" && key != "x0") unknown();
        } else if (sec == "grid") {
            if (key == "T" && scalar_once("grid.T", line_no)) {
                if (auto v = num(value, line_no, key)) cfg_.T = *v;
            } else if (key == "m" && scalar_once("grid.m", line_no)) {
                if (auto v = num(value, line_no, key)) cfg_.m = static_cast<int>(*v);
            } else if (key == "lna_step" && scalar_once("grid.lna_step", line_no)) {
                if (auto v = num(value, line_no, key)) cfg_.lna_step = *v;
            } else if (key != "T" && key != "m" && key != "lna_step") unknown();
        } else if (sec == "observation") {
            if (key == "regime" && scalar_once("observation.regime", line_no)) {
                if (value == "exact") cfg_.regime = Regime::Exact;
                else if (value == "noisy") cfg_.regime = Regime::Noisy;
                else error(line_no, "regime must be 'exact' or 'noisy'");
            } else if (key == "F" && scalar_once("observation.F", line_no)) {
                if (auto v = nums(value, line_no, key)) f_entries_ = *v;
            } else if (key == "sigma" && scalar_once("observation.sigma", line_no)) {
                if (auto v = nums(value, line_no, key)) sigma_entries_ = *v;
            } else if (key != "regime" && key != "F" && key != "sigma") unknown();
        } else if (sec == "endpoint") {
            if (key == "source" && scalar_once("endpoint.source", line_no)) {
                if (value == "quantile") cfg_.endpoint_source = EndpointSource::Quantile;
                else if (value == "value") cfg_.endpoint_source = EndpointSource::Value;
                else error(line_no, "endpoint source must be 'quantile' or 'value'");
            } else if (key == "level" && scalar_once("endpoint.level", line_no)) {
                if (auto v = nums(value, line_no, key)) {
                    for (Eigen::Index i = 0; i < v->size(); ++i) {
                        const int lv = static_cast<int>((*v)[i]);
                        if (lv != 5 && lv != 50 && lv != 95)
                            error(line_no, "quantile level must be one of 5, 50, 95");
                        else cfg_.quantile_levels.push_back(lv);
                    }
                }
            } else if (key == "value") {
                if (auto v = nums(value, line_no, key)) cfg_.endpoint_values.push_back(*v);
            } else if (key == "replicates" && scalar_once("endpoint.replicates", line_no)) {
                if (auto v = num(value, line_no, key))
                    cfg_.oracle_replicates = static_cast<long long>(*v);
            } else if (key == "step" && scalar_once("endpoint.step", line_no)) {
                if (auto v = num(value, line_no, key)) cfg_.oracle_step = *v;
            } else if (key != "source" && key != "level" && key != "replicates" &&
                       key != "step")
                unknown();
        } else if (sec == "bridges") {
            if (key == "bridge") parse_bridge(value, line_no);
            else unknown();
        } else if (sec == "mcmc") {
            if (key == "iterations" && scalar_once("mcmc.iterations", line_no)) {
                if (auto v = num(value, line_no, key))
                    cfg_.mcmc.iterations = static_cast<long long>(*v);
            } else if (key == "burn_in" && scalar_once("mcmc.burn_in", line_no)) {
                if (auto v = num(value, line_no, key))
                    cfg_.mcmc.burn_in = static_cast<long long>(*v);
            } else if (key == "seed" && scalar_once("mcmc.seed", line_no)) {
                try {
                    cfg_.mcmc.seed = std::stoull(value);
                } catch (...) {
                    error(line_no, "seed: expected an unsigned integer");
                }
            } else if (key == "stride" && scalar_once("mcmc.stride", line_no)) {
                if (auto v = num(value, line_no, key)) cfg_.mcmc.stride = static_cast<int>(*v);
            } else if (key != "iterations" && key != "burn_in" && key != "seed" &&
                       key != "stride")
                unknown();
        } else if (sec == "output") {
            if (key == "dir" && scalar_once("output.dir", line_no)) cfg_.out_dir = value;
            else if (key == "timing" && scalar_once("output.timing", line_no)) {
                if (value == "wall") cfg_.timing = true;
                else if (value == "off") cfg_.timing = false;
                else error(line_no, "timing must be 'wall' or 'off'");
            } else if (key != "dir" && key != "timing") unknown();
        }
    }

    void parse_bridge(const std::string& value, int line_no) {
        static const char* valid =
            "valid bridges: em, mdb, lb <gamma>, rb, rbminus, gp [once|per-interval], gpn, "
            "gps, gpmdb [once|per-interval]";
        const auto toks = split_ws(value);
        if (toks.empty()) {
            error(line_no, std::string("empty bridge spec; ") + valid);
            return;
        }
        const std::string& name = toks[0];
        auto mode_arg = [&](BridgeKind kind) {
            if (toks.size() == 1) {
                cfg_.bridges.push_back(kind);
            } else if (toks.size() == 2 && toks[1] == "once") {
                kind.gp_mode = GpMode::IntegrateOnce;
                cfg_.bridges.push_back(kind);
            } else if (toks.size() == 2 && toks[1] == "per-interval") {
                kind.gp_mode = GpMode::IntegratePerInterval;
                cfg_.bridges.push_back(kind);
            } else {
                error(line_no, name + ": expected optional mode 'once' or 'per-interval'");
            }
        };
        auto no_args = [&](BridgeKind kind) {
            if (toks.size() != 1) error(line_no, name + " takes no arguments");
            else cfg_.bridges.push_back(kind);
        };
        if (name == "em") no_args(BridgeKind::em());
        else if (name == "mdb") no_args(BridgeKind::mdb());
        else if (name == "lb") {
            if (toks.size() != 2) {
                error(line_no, "lb requires a gamma value");
                return;
            }
            if (auto g = num(toks[1], line_no, "lb gamma")) {
                if (*g > 0.0) cfg_.bridges.push_back(BridgeKind::lb(*g));
                else error(line_no, "lb gamma must be > 0");
            }
        } else if (name == "rb") no_args(BridgeKind::rb());
        else if (name == "rbminus") no_args(BridgeKind::rbminus());
        else if (name == "gp") mode_arg(BridgeKind::gp());
        else if (name == "gpn") no_args(BridgeKind::gpn());
        else if (name == "gps") no_args(BridgeKind::gps());
        else if (name == "gpmdb") mode_arg(BridgeKind::gpmdb());
        else error(line_no, "unknown bridge '" + name + "'; " + valid);
    }

    int line_of(const std::string& key) const {
        auto it = seen_.find(key);
        return it == seen_.end() ? 0 : it->second;
    }

    void finalise() {
        // Cross-field validation; keep collecting rather than stopping early.
        int d = 0;
        if (cfg_.model_name.empty()) {
            error(0, "[model] name is required");
        } else {
            try {
                if (cfg_.theta.size() == 0) error(line_of("model.name"), "[model] theta is required");
                else {
                    DiffusionModel model = make_model(cfg_.model_name, cfg_.theta);
                    d = model.d;
                    if (cfg_.x0.size() == 0) error(0, "[model] x0 is required");
                    else if (cfg_.x0.size() != d)
                        error(line_of("model.x0"), "x0 must have length " + std::to_string(d));
                    else if (!model.admissible(cfg_.x0))
                        error(line_of("model.x0"), "x0 is not admissible for this model");
                }
            } catch (const Error& e) {
                error(line_of("model.name"), e.what());
            }
        }
        if (!(cfg_.T > 0.0)) error(line_of("grid.T"), "T must be > 0");
        if (cfg_.m < 1) error(line_of("grid.m"), "m must be >= 1");
        if (!(cfg_.lna_step > 0.0)) error(line_of("grid.lna_step"), "lna_step must be > 0");

        int d_o = d;
        if (cfg_.regime == Regime::Noisy) {
            if (f_entries_.size() == 0) error(0, "[observation] F is required in the noisy regime");
            else if (d > 0 && f_entries_.size() % d != 0)
                error(line_of("observation.F"),
                      "F must have d x d_o entries (row-major), d = " + std::to_string(d));
            else if (d > 0) {
                d_o = static_cast<int>(f_entries_.size()) / d;
                if (d_o < 1 || d_o > d)
                    error(line_of("observation.F"), "need 1 <= d_o <= d");
                else {
                    cfg_.F.resize(d, d_o);
                    for (int i = 0; i < d; ++i)
                        for (int j = 0; j < d_o; ++j) cfg_.F(i, j) = f_entries_[i * d_o + j];
                }
            }
            if (sigma_entries_.size() == 0)
                error(0, "[observation] sigma is required in the noisy regime");
            else if (d_o > 0 && sigma_entries_.size() != d_o * d_o)
                error(line_of("observation.sigma"),
                      "sigma must have d_o x d_o entries, d_o = " + std::to_string(d_o));
            else if (d_o > 0) {
                cfg_.Sigma.resize(d_o, d_o);
                for (int i = 0; i < d_o; ++i)
                    for (int j = 0; j < d_o; ++j) cfg_.Sigma(i, j) = sigma_entries_[i * d_o + j];
                try {
                    ObservationModel::noisy(cfg_.F, cfg_.Sigma);
                } catch (const Error& e) {
                    error(line_of("observation.sigma"), e.what());
                }
            }
        } else {
            if (f_entries_.size() != 0 || sigma_entries_.size() != 0)
                error(line_of("observation.F"), "F/sigma are only valid in the noisy regime");
        }

        if (cfg_.endpoint_source == EndpointSource::Quantile) {
            if (!cfg_.endpoint_values.empty())
                error(0, "[endpoint] value lines require source = value");
            if (cfg_.quantile_levels.empty())
                error(0, "[endpoint] at least one quantile level is required");
            if (cfg_.oracle_replicates < 10000)
                error(line_of("endpoint.replicates"), "replicates must be >= 10000");
            if (cfg_.oracle_step == 0.0)
                cfg_.oracle_step = cfg_.model_name == "aphid" ? 0.0025 : 0.005;
            if (!(cfg_.oracle_step > 0.0) || cfg_.oracle_step > cfg_.T / cfg_.m + 1e-15)
                error(line_of("endpoint.step"), "step must be in (0, T/m]");
        } else {
            if (!cfg_.quantile_levels.empty())
                error(0, "[endpoint] level lines require source = quantile");
            if (cfg_.endpoint_values.empty())
                error(0, "[endpoint] at least one value line is required");
            const int want = cfg_.regime == Regime::Exact ? d : d_o;
            if (want > 0)
                for (const VectorXd& v : cfg_.endpoint_values)
                    if (v.size() != want)
                        error(0, "endpoint values must have length " + std::to_string(want));
        }

        if (cfg_.bridges.empty()) error(0, "[bridges] at least one bridge is required");
        for (const BridgeKind& kind : cfg_.bridges) {
            try {
                validate_kind(kind, cfg_.regime);
            } catch (const Error& e) {
                error(0, e.what());
            }
        }

        if (cfg_.mcmc.iterations < 1) error(line_of("mcmc.iterations"), "iterations must be >= 1");
        if (cfg_.mcmc.burn_in < 0 || cfg_.mcmc.burn_in >= cfg_.mcmc.iterations)
            error(line_of("mcmc.burn_in"), "need 0 <= burn_in < iterations");
        if (cfg_.mcmc.stride < 1) error(line_of("mcmc.stride"), "stride must be >= 1");
    }

    ExperimentConfig cfg_;
    std::string section_;
    std::map<std::string, int> seen_;
    std::vector<ConfigError> errors_;
    VectorXd f_entries_ = VectorXd(0);
    VectorXd sigma_entries_ = VectorXd(0);
};

}  // namespace detail

/// Parse the key-value experiment format. All problems are reported at once
/// with line anchors; the config is only returned when there are none.
inline ParseResult parse_config(std::string_view text) {
    detail::ConfigParser parser;
    return parser.parse(text);
}

inline std::string bridge_spec_string(const BridgeKind& kind) {
    std::string out = kind.name();
    if (kind.family == BridgeFamily::Lb) out += " " + detail::fmt_double(kind.gamma);
    if (kind.gp_mode)
        out += *kind.gp_mode == GpMode::IntegrateOnce ? " once" : " per-interval";
    return out;
}

/// Canonical text form; parse(serialize(parse(x))) is structurally lossless.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[model]\n";
    out << "name = " << cfg.model_name << "\n";
    out << "theta = " << detail::fmt_vector(cfg.theta) << "\n";
    out << "x0 = " << detail::fmt_vector(cfg.x0) << "\n\n";
    out << "[grid]\n";
    out << "T = " << detail::fmt_double(cfg.T) << "\n";
    out << "m = " << cfg.m << "\n";
    out << "lna_step = " << detail::fmt_double(cfg.lna_step) << "\n\n";
    out << "[observation]\n";
    out << "regime = " << (cfg.regime == Regime::Exact ? "exact" : "noisy") << "\n";
    if (cfg.regime == Regime::Noisy) {
        out << "F = " << detail::fmt_matrix_rowmajor(cfg.F) << "\n";
        out << "sigma = " << detail::fmt_matrix_rowmajor(cfg.Sigma) << "\n";
    }
    out << "\n[endpoint]\n";
    if (cfg.endpoint_source == EndpointSource::Quantile) {
        out << "source = quantile\n";
        out << "level =";
        for (int lv : cfg.quantile_levels) out << ' ' << lv;
        out << "\n";
        out << "replicates = " << cfg.oracle_replicates << "\n";
        out << "step = " << detail::fmt_double(cfg.oracle_step) << "\n";
    } else {
        out << "source = value\n";
        for (const VectorXd& v : cfg.endpoint_values)
            out << "value = " << detail::fmt_vector(v) << "\n";
    }
    out << "\n[bridges]\n";
    for (const BridgeKind& kind : cfg.bridges) out << "bridge = " << bridge_spec_string(kind) << "\n";
    out << "\n[mcmc]\n";
    out << "iterations = " << cfg.mcmc.iterations << "\n";
    out << "burn_in = " << cfg.mcmc.burn_in << "\n";
    out << "seed = " << cfg.mcmc.seed << "\n";
    out << "stride = " << cfg.mcmc.stride << "\n";
    out << "\n[output]\n";
    out << "dir = " << cfg.out_dir << "\n";
    out << "timing = " << (cfg.timing ? "wall" : "off") << "\n";
    return out.str();
}

}  // namespace sdebridge
