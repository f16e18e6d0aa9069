#pragma once

/// Experiment sweeps over N and their on-disk artifacts.
///
/// A config is flat `key = value` text with `#` comments:
///
///     preset = example3
///     N = 5, 10, 20, 40, 80
///     stationary_tol = 1e-10
///     out = results/example3
///
/// Keys: preset, epsilon, N, dt, delta, delta_tilde, t_end, stationary_tol,
/// snapshot_times, mode (moving | frozen), max_halvings, dt_growth, dt_max,
/// baseline (true | false), sigma (true | false), out, seed.

#include "movfem/analysis.hpp"
#include "movfem/error.hpp"
#include "movfem/integrator.hpp"
#include "movfem/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace movfem {

struct ExperimentConfig {
    std::string preset;
    std::optional<double> epsilon;
    std::vector<int> Ns;
    std::optional<double> dt;
    std::optional<double> delta;
    std::optional<double> delta_tilde;
    std::optional<double> t_end;
    std::optional<double> stationary_tol;
    std::optional<std::vector<double>> snapshot_times;
    std::optional<Mode> mode;
    std::optional<int> max_halvings;
    std::optional<double> dt_growth;
    std::optional<double> dt_max;
    /// Frozen-mesh baseline; by default run for presets with a time-dependent exact solution.
    std::optional<bool> baseline;
    /// Best free-knot approximation oracle per N; by default for stationary exact solutions.
    std::optional<bool> sigma;
    std::filesystem::path out = "out";
    std::uint64_t seed = 0;

    void validate() const {
        require(!preset.empty(), ErrorCode::config_error, "config needs a preset");
        for (std::size_t i = 0; i < Ns.size(); ++i) {
            require(Ns[i] >= 2, ErrorCode::config_error, "N values must be >= 2");
            require(i == 0 || Ns[i] > Ns[i - 1], ErrorCode::config_error, "N list must be strictly increasing");
        }
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> items;
    std::string current;
    for (char c : s) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!current.empty()) items.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) items.push_back(std::move(current));
    return items;
}

inline double parse_real(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    require(used == s.size() && !s.empty(), ErrorCode::config_error, where + ": not a number: '" + s + "'");
    return v;
}

inline long long parse_integer(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    require(used == s.size() && !s.empty(), ErrorCode::config_error, where + ": not an integer: '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw Error(ErrorCode::config_error, where + ": expected true or false, got '" + s + "'");
}

inline Mode parse_mode(const std::string& s, const std::string& where) {
    if (s == "moving") return Mode::moving;
    if (s == "frozen" || s == "frozen_mesh") return Mode::frozen_mesh;
    throw Error(ErrorCode::config_error, where + ": mode must be moving or frozen, got '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    std::map<std::string, int> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const std::string where = "line " + std::to_string(lineno);
        const auto eq = body.find('=');
        require(eq != std::string::npos, ErrorCode::config_error, where + ": expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        require(!key.empty(), ErrorCode::config_error, where + ": empty key");
        if (const auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
            throw Error(ErrorCode::config_error,
                        where + ": duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
        }

        if (key == "preset") {
            require(!value.empty(), ErrorCode::config_error, where + ": empty preset");
            cfg.preset = value;
        } else if (key == "epsilon") {
            cfg.epsilon = detail::parse_real(value, where);
        } else if (key == "N") {
            for (const auto& item : detail::split_list(value)) {
                cfg.Ns.push_back(static_cast<int>(detail::parse_integer(item, where)));
            }
        } else if (key == "dt") {
            cfg.dt = detail::parse_real(value, where);
        } else if (key == "delta") {
            cfg.delta = detail::parse_real(value, where);
        } else if (key == "delta_tilde") {
            cfg.delta_tilde = detail::parse_real(value, where);
        } else if (key == "t_end") {
            cfg.t_end = detail::parse_real(value, where);
        } else if (key == "stationary_tol") {
            cfg.stationary_tol = detail::parse_real(value, where);
        } else if (key == "snapshot_times") {
            std::vector<double> times;
            for (const auto& item : detail::split_list(value)) times.push_back(detail::parse_real(item, where));
            cfg.snapshot_times = std::move(times);
        } else if (key == "mode") {
            cfg.mode = detail::parse_mode(value, where);
        } else if (key == "max_halvings") {
            cfg.max_halvings = static_cast<int>(detail::parse_integer(value, where));
        } else if (key == "dt_growth") {
            cfg.dt_growth = detail::parse_real(value, where);
        } else if (key == "dt_max") {
            cfg.dt_max = detail::parse_real(value, where);
        } else if (key == "baseline") {
            cfg.baseline = detail::parse_bool(value, where);
        } else if (key == "sigma") {
            cfg.sigma = detail::parse_bool(value, where);
        } else if (key == "out") {
            require(!value.empty(), ErrorCode::config_error, where + ": empty output directory");
            cfg.out = value;
        } else if (key == "seed") {
            const long long seed = detail::parse_integer(value, where);
            require(seed >= 0, ErrorCode::config_error, where + ": seed must be >= 0");
            cfg.seed = static_cast<std::uint64_t>(seed);
        } else {
            throw Error(ErrorCode::config_error, where + ": unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::config_error, "cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

/// The preset named by a config, with its epsilon if given.
inline Preset experiment_preset(const ExperimentConfig& cfg) { return preset(cfg.preset, cfg.epsilon); }

/// Preset defaults with the config's overrides applied.
inline RunConfig run_config(const ExperimentConfig& cfg, const Preset& p, int n) {
    RunConfig rc = config_for(p, n);
    if (cfg.dt) rc.dt = *cfg.dt;
    if (cfg.delta) rc.delta = *cfg.delta;
    if (cfg.delta_tilde) rc.delta_tilde = *cfg.delta_tilde;
    if (cfg.t_end) rc.t_end = *cfg.t_end;
    if (cfg.stationary_tol) rc.stationary_tol = *cfg.stationary_tol;
    if (cfg.snapshot_times) rc.snapshot_times = *cfg.snapshot_times;
    if (cfg.mode) rc.mode = *cfg.mode;
    if (cfg.max_halvings) rc.max_halvings = *cfg.max_halvings;
    if (cfg.dt_growth) rc.dt_growth = *cfg.dt_growth;
    if (cfg.dt_max) rc.dt_max = *cfg.dt_max;
    return rc;
}

/// One (N, mode) run.
struct CellResult {
    int N = 0;
    Mode mode = Mode::moving;
    RunConfig run;
    std::optional<Trajectory> trajectory;
    std::optional<ErrorReport> errors;
    std::optional<SigmaResult> sigma;
    bool failed = false;
    std::string failure;
};

/// One error table: the moving-mesh or the frozen-mesh runs of a sweep.
struct Sweep {
    std::string tag;
    Mode mode = Mode::moving;
    std::vector<CellResult> cells;
    std::optional<OrderTable> h1;
    std::optional<OrderTable> second;
};

struct ResultBundle {
    ExperimentConfig config;
    std::string preset;
    /// err_l2 for time-dependent references, err_eng for stationary ones.
    std::string second_label;
    std::vector<Sweep> sweeps;

    [[nodiscard]] std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& s : sweeps) {
            for (const auto& c : s.cells) n += c.failed ? 1 : 0;
        }
        return n;
    }
};

namespace detail {

inline bool stationary_reference(const Preset& p) {
    return p.exact && p.exact->time_independent && p.exact->stationary_energy.has_value();
}

/// File tag of a preset; a free Allen-Cahn width is spelled into it.
inline std::string preset_tag(const Preset& p) {
    if (p.name != "allen_cahn") return p.name;
    char buf[48];
    std::snprintf(buf, sizeof buf, "allen_cahn_eps%g", p.problem.alpha);
    return buf;
}

inline CellResult run_cell(const ExperimentConfig& cfg, const Preset& p, int n, Mode mode, bool with_sigma) {
    CellResult cell;
    cell.N = n;
    cell.mode = mode;
    try {
        cell.run = run_config(cfg, p, n);
        cell.run.mode = mode;
        cell.trajectory = run(p, cell.run);
        const Trajectory& tr = *cell.trajectory;
        switch (tr.stop_reason) {
            case StopReason::degenerate:
            case StopReason::step_floor:
            case StopReason::step_limit:
                cell.failed = true;
                cell.failure = std::string(to_string(tr.stop_reason)) + ": " + tr.message;
                break;
            default:
                break;
        }
        if (p.exact) {
            const SimState& s = tr.final_state;
            ErrorReport rep;
            rep.N = n;
            rep.err_h1 = h1_error(s.fn, *p.exact, s.t);
            rep.err_l2 = l2_error(s.fn, *p.exact, s.t);
            if (stationary_reference(p)) {
                rep.err_energy = energy_error(energy(s, p.problem), *p.exact->stationary_energy);
            }
            cell.errors = rep;
            if (with_sigma) {
                cell.sigma = sigma_N_oracle(*p.exact, s.t, p.problem.a, p.problem.b, n, cfg.seed);
            }
        }
    } catch (const Error& e) {
        cell.failed = true;
        cell.failure = e.what();
    }
    return cell;
}

inline void fill_orders(Sweep& sweep, bool energy_column) {
    std::vector<std::pair<int, double>> h1;
    std::vector<std::pair<int, double>> second;
    for (const auto& c : sweep.cells) {
        if (c.failed || !c.errors) continue;
        const double e2 = energy_column ? c.errors->err_energy.value_or(0.0) : c.errors->err_l2;
        if (c.errors->err_h1 <= 0.0 || e2 <= 0.0) continue;
        h1.emplace_back(c.N, c.errors->err_h1);
        second.emplace_back(c.N, e2);
    }
    if (h1.empty()) return;
    sweep.h1 = orders(h1, "err_h1");
    sweep.second = orders(second, energy_column ? "err_eng" : "err_l2");
}

}  // namespace detail

/// Runs every N of the config. Failures are recorded per cell and the sweep continues.
inline ResultBundle run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Preset p = experiment_preset(cfg);
    ResultBundle bundle;
    bundle.config = cfg;
    bundle.preset = detail::preset_tag(p);
    if (cfg.Ns.empty()) return bundle;
    const bool stationary = detail::stationary_reference(p);
    bundle.second_label = stationary ? "err_eng" : "err_l2";

    const Mode primary = cfg.mode.value_or(Mode::moving);
    const bool time_dependent_exact = p.exact && !p.exact->time_independent;
    const bool baseline = primary == Mode::moving && cfg.baseline.value_or(time_dependent_exact);
    const bool with_sigma = cfg.sigma.value_or(stationary);

    std::vector<Mode> modes{primary};
    if (baseline) modes.push_back(Mode::frozen_mesh);
    for (Mode mode : modes) {
        Sweep sweep;
        sweep.mode = mode;
        sweep.tag = mode == Mode::frozen_mesh ? bundle.preset + "_frozen" : bundle.preset;
        for (int n : cfg.Ns) {
            sweep.cells.push_back(detail::run_cell(cfg, p, n, mode, with_sigma && mode == Mode::moving));
        }
        detail::fill_orders(sweep, stationary);
        bundle.sweeps.push_back(std::move(sweep));
    }
    return bundle;
}

namespace detail {

/// 12 significant digits, the precision of every emitted number.
inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class CsvFile {
public:
    explicit CsvFile(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
        require(out_.good(), ErrorCode::io_error, "cannot write " + path.string());
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        require(!out_.fail(), ErrorCode::io_error, "write failed for " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::string cell_prefix(const Sweep& sweep, const CellResult& cell) {
    return sweep.tag + "_N" + std::to_string(cell.N);
}

inline void write_snapshot(const std::filesystem::path& path, const SimState& s) {
    CsvFile f(path);
    f.row({"x_k", "u_k"});
    const Partition& p = s.fn.partition();
    for (std::size_t k = 0; k < p.node_count(); ++k) {
        f.row({num(p.node(static_cast<int>(k))), num(s.fn.value(static_cast<int>(k)))});
    }
    f.close();
}

inline std::string gnuplot_script(const ResultBundle& bundle) {
    std::ostringstream g;
    g << "# gnuplot -p plot_" << bundle.preset << ".gp\n";
    g << "set datafile separator ','\nset key autotitle columnhead\nset grid\n";
    const bool have_errors = std::any_of(bundle.sweeps.begin(), bundle.sweeps.end(),
                                         [](const Sweep& s) { return s.h1.has_value(); });
    if (have_errors) {
        g << "\nset logscale xy\nset xlabel 'N'\nset ylabel 'error'\nplot \\\n";
        bool first = true;
        for (const auto& s : bundle.sweeps) {
            if (!s.h1) continue;
            for (int col : {2, 4}) {
                g << (first ? "  " : ", \\\n  ") << "'errors_" << s.tag << ".csv' using 1:" << col
                  << " with linespoints title '" << s.tag << (col == 2 ? " err_h1" : " " + bundle.second_label)
                  << "'";
                first = false;
            }
        }
        g << "\npause -1\nunset logscale\n";
    }
    for (const auto& s : bundle.sweeps) {
        if (s.mode != Mode::moving) continue;
        for (const auto& c : s.cells) {
            if (!c.trajectory) continue;
            const std::string prefix = cell_prefix(s, c);
            const auto n = static_cast<int>(c.N);
            g << "\nset xlabel 't'\nset ylabel 'energy'\nplot 'energy_" << prefix
              << ".csv' using 1:2 with lines, '' using 1:3 with lines\npause -1\n";
            g << "set xlabel 'x'\nset ylabel 't'\nplot for [k=2:" << n << "] 'nodes_" << prefix
              << ".csv' using k:1 with lines notitle lc rgb 'black'\npause -1\n";
        }
    }
    return g.str();
}

}  // namespace detail

/// Writes the bundle's tables, series, snapshots and a gnuplot script into `dir`.
/// Returns the written paths in write order. Output is a pure function of the bundle.
inline std::vector<std::filesystem::path> emit(const ResultBundle& bundle, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorCode::io_error, "cannot create output directory " + dir.string());
    std::vector<fs::path> written;
    using detail::num;

    for (const auto& sweep : bundle.sweeps) {
        if (sweep.h1) {
            const fs::path path = dir / ("errors_" + sweep.tag + ".csv");
            detail::CsvFile f(path);
            f.row({"N", "err_h1", "order_h1", "err_l2_or_eng", "order_2"});
            for (std::size_t i = 0; i < sweep.h1->rows.size(); ++i) {
                const auto& a = sweep.h1->rows[i];
                const auto& b = sweep.second->rows[i];
                f.row({std::to_string(a.N), num(a.err), a.order ? num(*a.order) : "", num(b.err),
                       b.order ? num(*b.order) : ""});
            }
            f.close();
            written.push_back(path);
        }

        if (std::any_of(sweep.cells.begin(), sweep.cells.end(), [](const CellResult& c) { return c.sigma; })) {
            const fs::path path = dir / ("sigma_" + sweep.tag + ".csv");
            detail::CsvFile f(path);
            f.row({"N", "sigma_N", "err_h1", "ratio", "stalled"});
            for (const auto& c : sweep.cells) {
                if (!c.sigma || !c.errors) continue;
                f.row({std::to_string(c.N), num(c.sigma->value), num(c.errors->err_h1),
                       num(c.errors->err_h1 / c.sigma->value), c.sigma->stalled ? "1" : "0"});
            }
            f.close();
            written.push_back(path);
        }

        {
            const fs::path path = dir / ("runs_" + sweep.tag + ".csv");
            detail::CsvFile f(path);
            f.row({"N", "mode", "stop_reason", "t_final", "dt", "accepted_steps", "halved_steps", "halvings",
                   "final_residual", "failed", "message"});
            for (const auto& c : sweep.cells) {
                std::string message = c.failed ? c.failure : (c.trajectory ? c.trajectory->message : "");
                for (char& ch : message) {
                    if (ch == ',' || ch == '\n') ch = ';';
                }
                if (c.trajectory) {
                    const Trajectory& tr = *c.trajectory;
                    f.row({std::to_string(c.N), c.mode == Mode::moving ? "moving" : "frozen",
                           std::string(to_string(tr.stop_reason)), num(tr.final_state.t), num(c.run.dt),
                           std::to_string(tr.step_stats.accepted), std::to_string(tr.step_stats.halved),
                           std::to_string(tr.step_stats.halvings), num(tr.final_residual), c.failed ? "1" : "0",
                           message});
                } else {
                    f.row({std::to_string(c.N), c.mode == Mode::moving ? "moving" : "frozen", "", "", "", "", "", "",
                           "", "1", message});
                }
            }
            f.close();
            written.push_back(path);
        }

        for (const auto& c : sweep.cells) {
            if (!c.trajectory) continue;
            const Trajectory& tr = *c.trajectory;
            const std::string prefix = detail::cell_prefix(sweep, c);

            {
                const fs::path path = dir / ("energy_" + prefix + ".csv");
                detail::CsvFile f(path);
                f.row({"t", "E_penalized", "E"});
                for (const auto& e : tr.energy_series) f.row({num(e.t), num(e.penalized), num(e.energy)});
                f.close();
                written.push_back(path);
            }
            for (const auto& snap : tr.snapshots) {
                const fs::path path = dir / ("snapshot_" + prefix + "_t" + num(snap.t) + ".csv");
                detail::write_snapshot(path, snap.state);
                written.push_back(path);
            }
            {
                const fs::path path = dir / ("snapshot_" + prefix + "_final.csv");
                detail::write_snapshot(path, tr.final_state);
                written.push_back(path);
            }
            if (sweep.mode == Mode::moving) {
                const fs::path path = dir / ("nodes_" + prefix + ".csv");
                detail::CsvFile f(path);
                std::vector<std::string> header{"t"};
                for (int k = 1; k < c.N; ++k) header.push_back("x_" + std::to_string(k));
                f.row(header);
                for (const auto& sample : tr.nodes) {
                    std::vector<std::string> row{num(sample.t)};
                    for (double x : sample.interior) row.push_back(num(x));
                    f.row(row);
                }
                f.close();
                written.push_back(path);
            }
        }
    }

    const fs::path script = dir / ("plot_" + bundle.preset + ".gp");
    {
        std::ofstream g(script, std::ios::binary);
        require(g.good(), ErrorCode::io_error, "cannot write " + script.string());
        g << detail::gnuplot_script(bundle);
        require(!g.fail(), ErrorCode::io_error, "write failed for " + script.string());
    }
    written.push_back(script);
    return written;
}

}  // namespace movfem
