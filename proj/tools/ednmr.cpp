// Experiment runner: resolves a config (file + flag overrides), executes one
// named experiment against the shipped data files, and writes CSV outputs
// plus a manifest echoing every value the run actually used.  Repeated runs
// of the same config produce identical bytes.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ednmr/dynamics.hpp"
#include "ednmr/io.hpp"
#include "ednmr/spincore.hpp"

namespace fs = std::filesystem;
using namespace ednmr;

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// canonical quantity text; parse(canon(v)) == v, so manifests rebuild runs
std::string canon(double v, const std::string& unit) {
    return unit.empty() ? fmt17(v) : fmt17(v) + " " + unit;
}

std::string trimmed(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// [section] headers plus key = value lines; '#' starts a comment
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open config " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trimmed(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                         ": unterminated section header");
            section = trimmed(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        const auto key = trimmed(line.substr(0, eq));
        const auto val = trimmed(line.substr(eq + 1));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": empty key");
        kv[section.empty() ? key : section + "." + key] = val;
    }
    return kv;
}

// Config resolution: flag override > section entry > global entry > default.
// Every resolved value is recorded for the manifest.
struct RunConfig {
    std::map<std::string, std::string> file;
    std::map<std::string, std::string> over;
    std::string data_dir;
    std::string config_note;
    std::vector<std::pair<std::string, std::string>> used;

    std::optional<std::string> pick(const std::string& flag_key,
                                    const std::string& cfg_key) const {
        if (!flag_key.empty()) {
            const auto it = over.find(flag_key);
            if (it != over.end())
                return it->second;
        }
        auto it = file.find(cfg_key);
        if (it != file.end())
            return it->second;
        const auto dot = cfg_key.find('.');
        if (dot != std::string::npos) {
            it = file.find(cfg_key.substr(dot + 1));
            if (it != file.end())
                return it->second;
        }
        return std::nullopt;
    }

    void record(const std::string& key, const std::string& value) {
        used.emplace_back(key, value);
    }

    std::string str(const std::string& flag_key, const std::string& cfg_key,
                    const std::string& fallback) {
        const auto v = pick(flag_key, cfg_key).value_or(fallback);
        record(cfg_key, v);
        return v;
    }

    double qty(const std::string& flag_key, const std::string& cfg_key,
               const std::string& unit, const std::string& fallback) {
        const auto text = pick(flag_key, cfg_key).value_or(fallback);
        double v = 0;
        try {
            v = parse_quantity(text, unit);
        } catch (const std::invalid_argument&) {
            v = parse_quantity(text, "");   // bare number: already base units
        }
        record(cfg_key, canon(v, unit));
        return v;
    }

    std::optional<double> qty_opt(const std::string& flag_key,
                                  const std::string& cfg_key,
                                  const std::string& unit) {
        const auto text = pick(flag_key, cfg_key);
        if (!text)
            return std::nullopt;
        double v = 0;
        try {
            v = parse_quantity(*text, unit);
        } catch (const std::invalid_argument&) {
            v = parse_quantity(*text, "");
        }
        record(cfg_key, canon(v, unit));
        return v;
    }

    long integer(const std::string& flag_key, const std::string& cfg_key,
                 long fallback) {
        const auto text =
            pick(flag_key, cfg_key).value_or(std::to_string(fallback));
        size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(text, &pos);
        } catch (const std::exception&) {
            pos = std::string::npos;
        }
        if (pos != text.size())
            throw std::invalid_argument(cfg_key + " must be an integer, got '" +
                                        text + "'");
        record(cfg_key, std::to_string(v));
        return v;
    }

    // relative data files resolve against the data directory
    std::string path(const std::string& flag_key, const std::string& cfg_key,
                     const std::string& fallback) {
        fs::path p(pick(flag_key, cfg_key).value_or(fallback));
        if (p.is_relative())
            p = fs::path(data_dir) / p;
        record(cfg_key, p.string());
        return p.string();
    }
};

std::vector<double> linspace(double a, double b, long n, const std::string& what) {
    if (n < 2)
        throw std::invalid_argument(what + ": needs at least 2 points");
    if (!(b > a))
        throw std::invalid_argument(what + ": grid must ascend");
    std::vector<double> g(static_cast<size_t>(n));
    for (long k = 0; k < n; ++k)
        g[static_cast<size_t>(k)] = a + (b - a) * k / (n - 1);
    return g;
}

std::string kind_name(TransitionClass k) {
    switch (k) {
        case TransitionClass::ESR: return "esr";
        case TransitionClass::NuclearSQT: return "nuclear_sqt";
        case TransitionClass::NuclearDQT: return "nuclear_dqt";
        case TransitionClass::Other: return "other";
    }
    return "other";
}

void write_table_csv(const fs::path& path,
                     const std::vector<std::pair<std::string, std::string>>& meta,
                     const std::vector<std::string>& columns,
                     const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    for (const auto& [k, v] : meta)
        f << "# " << k << " = " << v << "\n";
    for (size_t c = 0; c < columns.size(); ++c)
        f << (c ? "," : "") << columns[c];
    f << "\n";
    for (const auto& row : rows) {
        for (size_t c = 0; c < row.size(); ++c)
            f << (c ? "," : "") << row[c];
        f << "\n";
    }
}

void write_plot_script(const fs::path& path, const std::string& csv,
                       const std::string& xlabel, const std::string& ylabel,
                       const std::string& plot_spec) {
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path.string());
    f << "set datafile separator \",\"\n"
      << "set key autotitle columnhead\n"
      << "set xlabel \"" << xlabel << "\"\n"
      << "set ylabel \"" << ylabel << "\"\n"
      << "plot \"" << csv << "\" " << plot_spec << "\n";
}

// ---------------------------------------------------------------- loading

struct Bench {
    SpinSystem sys;
    StaticField field;
    LevelSet levels;
    std::vector<Transition> transitions;
};

SpinSystem pick_species(const std::map<std::string, SpinSystem>& lib,
                        const std::string& label) {
    const auto it = lib.find(label);
    if (it == lib.end())
        throw std::invalid_argument("unknown species '" + label + "'");
    return it->second;
}

DriveModel pick_drive(const std::map<std::string, DriveModel>& lib,
                      const std::string& label) {
    const auto it = lib.find(label);
    if (it == lib.end())
        throw std::invalid_argument("no drive coefficients for species '" +
                                    label + "'");
    return it->second;
}

Bench make_bench(const SpinSystem& sys, double b0_T) {
    Bench b;
    b.sys = sys;
    b.field.b_tesla = Vector3(0.0, 0.0, b0_T);
    b.levels = eigensystem(sys, build_hamiltonian(sys, b.field));
    b.transitions = transition_table(b.levels, sys, ProbeAxis::NuclearX);
    return b;
}

// The drive's best handle on the nuclear spins: the highest-frequency
// single-quantum line reachable at the fundamental or first subharmonic.
struct DriveTarget {
    double line_Hz = 0.0;
    double carrier_Hz = 0.0;
    int harmonic = 1;
    double rate_Hz = 0.0;
    int lower = 0, upper = 0;
};

DriveTarget pick_target(const Bench& b, const DriveSpec& drive,
                        double amplitude) {
    const Transition* line = nullptr;
    for (const auto& t : b.transitions)
        if (t.kind == TransitionClass::NuclearSQT &&
            (!line || t.frequency_MHz > line->frequency_MHz))
            line = &t;
    if (!line)
        throw no_resonance_error("species has no nuclear transitions");

    DriveTarget out;
    out.line_Hz = line->frequency_MHz * 1e6;
    out.lower = line->lower;
    out.upper = line->upper;

    if (drive.channel == DriveSpec::Channel::MagneticB2) {
        const auto op =
            zeeman_drive_operator(b.sys, amplitude * drive.b_direction);
        const ComplexMatrix el = b.levels.states.col(line->upper).adjoint() *
                                 op * b.levels.states.col(line->lower);
        out.carrier_Hz = out.line_Hz;
        out.harmonic = 1;
        out.rate_Hz = std::abs(el(0, 0)) * 1e6;
        if (out.rate_Hz <= 0.0)
            throw no_resonance_error("magnetic drive does not couple the line");
        return out;
    }

    // electric channel: fundamental first, then the subharmonic
    for (const auto& [carrier, n] :
         {std::pair<double, int>{out.line_Hz, 1}, {0.5 * out.line_Hz, 2}}) {
        try {
            const auto hd = harmonic_components(drive.model, b.sys, b.field,
                                                amplitude, carrier);
            const double r =
                rabi_rate(b.levels, hd, line->lower, line->upper, n, 1.0);
            if (r > 1e-6) {
                out.carrier_Hz = carrier;
                out.harmonic = n;
                out.rate_Hz = r;
                return out;
            }
        } catch (const no_resonance_error&) {
        }
    }
    throw no_resonance_error(
        "electric drive couples no harmonic to the nuclear line");
}

// ---------------------------------------------------------------- phases

int config_error(const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
}

int numeric_error(const char* name, const std::exception& e) {
    std::fprintf(stderr, "%s failed: %s\n", name, e.what());
    return 2;
}

fs::path prepare_out(RunConfig& rc, const std::string& flag_out) {
    fs::path out(flag_out.empty()
                     ? rc.pick("", "out_dir").value_or(".")
                     : flag_out);
    fs::create_directories(out);
    rc.record("out_dir", out.string());
    return out;
}

void finish_manifest(const RunConfig& rc, const fs::path& out,
                     const std::string& sub,
                     const std::vector<std::string>& outputs) {
    std::vector<std::pair<std::string, std::string>> entries;
    entries.emplace_back("subcommand", sub);
    entries.emplace_back("config_file", rc.config_note);
    entries.insert(entries.end(), rc.used.begin(), rc.used.end());
    for (const auto& o : outputs)
        entries.emplace_back("output." + o, o);
    const std::string name =
        sub == "field-sweep" ? "field_sweep" : (sub == "rabi-map" ? "rabi_map" : sub);
    write_manifest((out / (name + "_manifest.json")).string(), entries);
}

// ---------------------------------------------------------------- commands

struct Flags {
    std::string config, species, b0, channel, out, format = "csv";
    long threads = 1;
    bool gnuplot = false;
};

RunConfig load_config(const Flags& fl) {
    RunConfig rc;
    const char* env = std::getenv("EDNMR_DATA_DIR");
    rc.data_dir = env ? env : "data";
    std::string cfg = fl.config;
    if (cfg.empty()) {
        const fs::path fallback = fs::path(rc.data_dir) / "config.ini";
        if (fs::exists(fallback))
            cfg = fallback.string();
    }
    if (!cfg.empty()) {
        rc.file = parse_config_file(cfg);
        rc.config_note = cfg;
    } else {
        rc.config_note = "builtin defaults";
    }
    if (!fl.species.empty()) rc.over["species"] = fl.species;
    if (!fl.b0.empty()) rc.over["b0"] = fl.b0;
    if (!fl.channel.empty()) rc.over["channel"] = fl.channel;
    if (fl.format != "csv")
        throw std::invalid_argument("unsupported output format '" + fl.format +
                                    "' (only csv)");
    if (fl.threads < 1)
        throw std::invalid_argument("--threads must be at least 1");
    // worker count never changes results, so it stays out of the manifest
    return rc;
}

int cmd_levels(const Flags& fl) {
    RunConfig rc;
    Bench bench;
    fs::path out;
    std::string species;
    double b0 = 0;
    try {
        rc = load_config(fl);
        species = rc.str("species", "species", "P");
        b0 = rc.qty("b0", "b0", "T", "250 mT");
        const auto donors =
            load_donor_library(rc.path("", "donor_file", "donors.json"));
        bench = make_bench(pick_species(donors, species), b0);
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    try {
        const std::vector<std::pair<std::string, std::string>> meta = {
            {"species", species}, {"b0_tesla", fmt17(b0)}};

        std::vector<std::vector<std::string>> lrows;
        for (int k = 0; k < bench.levels.energies_MHz.size(); ++k)
            lrows.push_back({std::to_string(k),
                             fmt17(bench.levels.energies_MHz[k]),
                             fmt17(bench.levels.labels[k].first),
                             fmt17(bench.levels.labels[k].second)});
        write_table_csv(out / "levels.csv", meta,
                        {"level", "energy_mhz", "m_s", "m_i"}, lrows);

        std::vector<std::vector<std::string>> trows;
        for (const auto& t : bench.transitions)
            trows.push_back({std::to_string(t.lower), std::to_string(t.upper),
                             fmt17(t.frequency_MHz), fmt17(t.weight),
                             std::to_string(t.delta_ms),
                             std::to_string(t.delta_mi), kind_name(t.kind)});
        write_table_csv(out / "transitions.csv", meta,
                        {"lower", "upper", "frequency_mhz", "weight",
                         "delta_ms", "delta_mi", "kind"},
                        trows);
        finish_manifest(rc, out, "levels", {"levels.csv", "transitions.csv"});
    } catch (const std::exception& e) {
        return numeric_error("levels", e);
    }
    return 0;
}

int cmd_field_sweep(const Flags& fl) {
    RunConfig rc;
    SpinSystem sys;
    fs::path out;
    std::string species;
    std::vector<double> grid;
    double b_min = 0, b_max = 0;
    try {
        rc = load_config(fl);
        species = rc.str("species", "species", "P");
        const auto donors =
            load_donor_library(rc.path("", "donor_file", "donors.json"));
        sys = pick_species(donors, species);
        const double f_lo = rc.qty("", "field-sweep.f_start", "Hz", "5 GHz");
        const double f_hi = rc.qty("", "field-sweep.f_stop", "Hz", "9 GHz");
        const long n = rc.integer("", "field-sweep.points", 17);
        grid = linspace(f_lo, f_hi, n, "field-sweep frequency grid");
        b_min = rc.qty("", "field-sweep.b_min", "T", "10 mT");
        b_max = rc.qty("", "field-sweep.b_max", "T", "600 mT");
        if (!(b_max > b_min))
            throw std::invalid_argument("field-sweep: b_max must exceed b_min");
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    try {
        std::vector<std::vector<std::string>> rows;
        for (double f_hz : grid)
            for (const auto& r :
                 esr_field_positions(sys, f_hz / 1e6, b_min, b_max))
                rows.push_back({fmt17(f_hz), fmt17(r.nuclear_label),
                                fmt17(r.field_T)});
        write_table_csv(out / "field_sweep.csv", {{"species", species}},
                        {"f_hz", "m_i", "b_tesla"}, rows);
        std::vector<std::string> outputs = {"field_sweep.csv"};
        if (fl.gnuplot) {
            write_plot_script(out / "field_sweep.gp", "field_sweep.csv",
                              "b_tesla", "f_hz", "using 3:1 with points");
            outputs.push_back("field_sweep.gp");
        }
        finish_manifest(rc, out, "field-sweep", outputs);
    } catch (const std::exception& e) {
        return numeric_error("field-sweep", e);
    }
    return 0;
}

DriveSpec make_drive(const std::string& channel, const DriveModel& model) {
    DriveSpec d;
    if (channel == "electric") {
        d.channel = DriveSpec::Channel::ElectricE2;
        d.model = model;
    } else if (channel == "magnetic") {
        d.channel = DriveSpec::Channel::MagneticB2;
    } else {
        throw std::invalid_argument("channel must be electric or magnetic, got '" +
                                    channel + "'");
    }
    return d;
}

int cmd_endor(const Flags& fl) {
    RunConfig rc;
    Bench bench;
    DriveSpec drive;
    fs::path out;
    std::string species, channel;
    double amplitude = 0, probed_mi = 0;
    std::optional<double> f_lo, f_hi, duration;
    long points = 0;
    SequenceSettings settings;
    try {
        rc = load_config(fl);
        species = rc.str("species", "species", "P");
        const double b0 = rc.qty("b0", "b0", "T", "250 mT");
        channel = rc.str("channel", "endor.channel", "electric");
        const auto donors =
            load_donor_library(rc.path("", "donor_file", "donors.json"));
        DriveModel model;
        if (channel == "electric")
            model = pick_drive(load_drive_library(rc.path(
                                   "", "drive_file", "drive_coefficients.json")),
                               species);
        drive = make_drive(channel, model);
        bench = make_bench(pick_species(donors, species), b0);
        amplitude = channel == "electric"
                        ? rc.qty("", "endor.e_amp", "V/m", "1e5 V/m")
                        : rc.qty("", "endor.b2_amp", "T", "0.5 mT");
        probed_mi = rc.qty("", "endor.probed_mi", "", "0.5");
        f_lo = rc.qty_opt("", "endor.f_start", "Hz");
        f_hi = rc.qty_opt("", "endor.f_stop", "Hz");
        points = rc.integer("", "endor.points", 81);
        duration = rc.qty_opt("", "endor.rf_duration", "s");
        settings.temperature_K = rc.qty("", "temperature", "K", "1.9 K");
        settings.window_MHz = rc.qty("", "endor.window", "Hz", "1 MHz") / 1e6;
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    try {
        const auto target = pick_target(bench, drive, amplitude);
        if (!duration) {
            duration = 0.5 / target.rate_Hz;
            rc.record("endor.rf_duration", canon(*duration, "s"));
        }
        if (!f_lo || !f_hi) {
            // center the window on where this drive actually responds
            double lo = 1e300, hi = -1e300;
            for (const auto& t : bench.transitions)
                if (t.kind == TransitionClass::NuclearSQT) {
                    const double f =
                        t.frequency_MHz * 1e6 / target.harmonic;
                    lo = std::min(lo, f);
                    hi = std::max(hi, f);
                }
            f_lo = lo - 2e6;
            f_hi = hi + 2e6;
            rc.record("endor.f_start", canon(*f_lo, "Hz"));
            rc.record("endor.f_stop", canon(*f_hi, "Hz"));
        }
        const auto grid =
            linspace(*f_lo, *f_hi, points, "endor frequency grid");
        auto spectrum =
            davies_endor_spectrum(bench.sys, bench.field, drive, grid,
                                  *duration, amplitude, probed_mi, settings);
        spectrum.metadata.emplace_back("channel", channel);
        write_spectrum_csv(spectrum, (out / "endor.csv").string());
        std::vector<std::string> outputs = {"endor.csv"};
        if (fl.gnuplot) {
            write_plot_script(out / "endor.gp", "endor.csv",
                              "rf_frequency_hz", "endor_contrast",
                              "using 1:2 with linespoints");
            outputs.push_back("endor.gp");
        }
        finish_manifest(rc, out, "endor", outputs);
    } catch (const std::exception& e) {
        return numeric_error("endor", e);
    }
    return 0;
}

int cmd_rabi_map(const Flags& fl) {
    RunConfig rc;
    Bench bench;
    DriveSpec drive;
    fs::path out;
    std::string species, channel;
    double amplitude = 0, scale_lo = 0, scale_hi = 0;
    std::optional<double> carrier, t_stop;
    long n_dur = 0, n_amp = 0;
    SequenceSettings settings;
    try {
        rc = load_config(fl);
        species = rc.str("species", "species", "P");
        const double b0 = rc.qty("b0", "b0", "T", "250 mT");
        channel = rc.str("channel", "rabi-map.channel", "electric");
        const auto donors =
            load_donor_library(rc.path("", "donor_file", "donors.json"));
        DriveModel model;
        if (channel == "electric")
            model = pick_drive(load_drive_library(rc.path(
                                   "", "drive_file", "drive_coefficients.json")),
                               species);
        drive = make_drive(channel, model);
        bench = make_bench(pick_species(donors, species), b0);
        amplitude = channel == "electric"
                        ? rc.qty("", "rabi-map.e_amp", "V/m", "1e5 V/m")
                        : rc.qty("", "rabi-map.b2_amp", "T", "0.5 mT");
        carrier = rc.qty_opt("", "rabi-map.carrier", "Hz");
        t_stop = rc.qty_opt("", "rabi-map.t_stop", "s");
        n_dur = rc.integer("", "rabi-map.durations", 17);
        scale_lo = rc.qty("", "rabi-map.scale_start", "", "0.5");
        scale_hi = rc.qty("", "rabi-map.scale_stop", "", "1.5");
        n_amp = rc.integer("", "rabi-map.amplitudes", 5);
        settings.temperature_K = rc.qty("", "temperature", "K", "1.9 K");
        settings.window_MHz = rc.qty("", "rabi-map.window", "Hz", "1 MHz") / 1e6;
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    try {
        const auto target = pick_target(bench, drive, amplitude);
        if (!carrier) {
            carrier = target.carrier_Hz;
            rc.record("rabi-map.carrier", canon(*carrier, "Hz"));
        }
        if (!t_stop) {
            t_stop = 2.5 / target.rate_Hz;   // a few nutation periods
            rc.record("rabi-map.t_stop", canon(*t_stop, "s"));
        }
        const auto durations =
            linspace(0.0, *t_stop, n_dur, "rabi-map duration grid");
        const auto scales =
            linspace(scale_lo, scale_hi, n_amp, "rabi-map amplitude grid");
        std::vector<double> amps;
        for (double s : scales)
            amps.push_back(s * amplitude);
        auto map = rabi_map(bench.sys, bench.field, drive, *carrier, durations,
                            amps, settings);
        map.metadata.emplace_back("channel", channel);
        write_map_csv(map, (out / "rabi_map.csv").string());
        finish_manifest(rc, out, "rabi-map", {"rabi_map.csv"});
    } catch (const std::exception& e) {
        return numeric_error("rabi-map", e);
    }
    return 0;
}

int cmd_pbg(const Flags& fl) {
    RunConfig rc;
    TransmissionNetwork net;
    fs::path out;
    std::vector<double> grid;
    double threshold = 0;
    std::optional<double> fit_lo, fit_hi;
    try {
        rc = load_config(fl);
        net = load_network_csv(
            rc.path("", "pbg.network_file", "pbg_paper.csv"));
        const double f_lo = rc.qty("", "pbg.f_start", "Hz", "2 GHz");
        const double f_hi = rc.qty("", "pbg.f_stop", "Hz", "11 GHz");
        const long n = rc.integer("", "pbg.points", 1801);
        grid = linspace(f_lo, f_hi, n, "pbg frequency grid");
        threshold = rc.qty("", "pbg.gap_threshold", "dB", "-20 dB");
        fit_lo = rc.qty_opt("", "pbg.fit_start", "Hz");
        fit_hi = rc.qty_opt("", "pbg.fit_stop", "Hz");
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    try {
        auto sweep = sweep_s21(net, grid);
        const auto edges = bandgap_edges(sweep, threshold);
        if (!edges)
            throw std::runtime_error("no stopband below " + fmt17(threshold) +
                                     " dB on the sweep grid");
        if (!fit_lo || !fit_hi) {
            // defect mode: the transmission maximum strictly inside the gap
            double best = -1e300, f_best = 0;
            for (size_t k = 0; k < sweep.axis.size(); ++k)
                if (sweep.axis[k] > edges->f_low_hz &&
                    sweep.axis[k] < edges->f_high_hz &&
                    sweep.signal[k] > best) {
                    best = sweep.signal[k];
                    f_best = sweep.axis[k];
                }
            if (f_best == 0)
                throw std::runtime_error("no in-gap transmission maximum");
            fit_lo = f_best - 8e6;
            fit_hi = f_best + 8e6;
            rc.record("pbg.fit_start", canon(*fit_lo, "Hz"));
            rc.record("pbg.fit_stop", canon(*fit_hi, "Hz"));
        }
        const auto fine = linspace(*fit_lo, *fit_hi, 3201, "pbg fit grid");
        const auto fit =
            resonance_fit(sweep_s21(net, fine), fine.front(), fine.back());

        sweep.metadata.emplace_back("gap_threshold_db", fmt17(threshold));
        sweep.metadata.emplace_back("gap_low_hz", fmt17(edges->f_low_hz));
        sweep.metadata.emplace_back("gap_high_hz", fmt17(edges->f_high_hz));
        sweep.metadata.emplace_back("resonance_f0_hz", fmt17(fit.f0_hz));
        sweep.metadata.emplace_back("resonance_loaded_q", fmt17(fit.loaded_q));
        sweep.metadata.emplace_back("resonance_q_3db", fmt17(fit.q_3dB));
        sweep.metadata.emplace_back("resonance_insertion_loss_db",
                                    fmt17(fit.insertion_loss_dB));
        write_spectrum_csv(sweep, (out / "pbg.csv").string());
        std::vector<std::string> outputs = {"pbg.csv"};
        if (fl.gnuplot) {
            write_plot_script(out / "pbg.gp", "pbg.csv", "f_hz", "s21_db",
                              "using 1:2 with lines");
            outputs.push_back("pbg.gp");
        }
        finish_manifest(rc, out, "pbg", outputs);
    } catch (const std::exception& e) {
        return numeric_error("pbg", e);
    }
    return 0;
}

int cmd_validate(const Flags& fl) {
    RunConfig rc;
    fs::path out;
    std::string donor_path, drive_path, net_path;
    try {
        rc = load_config(fl);
        donor_path = rc.path("", "donor_file", "donors.json");
        drive_path = rc.path("", "drive_file", "drive_coefficients.json");
        net_path = rc.path("", "pbg.network_file", "pbg_paper.csv");
        out = prepare_out(rc, fl.out);
    } catch (const std::exception& e) {
        return config_error(e);
    }

    int failures = 0;
    auto check = [&](const char* what, const std::function<void()>& body) {
        try {
            body();
            std::printf("[ok]   %s\n", what);
        } catch (const std::exception& e) {
            std::printf("[fail] %s: %s\n", what, e.what());
            ++failures;
        }
    };
    auto expect = [](bool cond, const std::string& msg) {
        if (!cond)
            throw std::runtime_error(msg);
    };

    const auto donors = load_donor_library(donor_path);
    const auto drives = load_drive_library(drive_path);

    check("doublet donor lines sit at their calibrated positions", [&] {
        const auto b = make_bench(pick_species(donors, "P"), 0.25);
        std::vector<double> sqts;
        for (const auto& t : b.transitions)
            if (t.kind == TransitionClass::NuclearSQT)
                sqts.push_back(t.frequency_MHz);
        expect(sqts.size() == 2, "expected two nuclear lines");
        expect(std::abs(sqts.front() - 53.9590) < 1e-3 &&
                   std::abs(sqts.back() - 63.5710) < 1e-3,
               "lines moved: " + fmt17(sqts.front()) + ", " +
                   fmt17(sqts.back()));
    });

    check("quadrupolar donor shows six lines with additive double steps", [&] {
        const auto b = make_bench(pick_species(donors, "As"), 0.25);
        std::vector<double> sqts;
        std::vector<const Transition*> dqts;
        for (const auto& t : b.transitions) {
            if (t.kind == TransitionClass::NuclearSQT)
                sqts.push_back(t.frequency_MHz);
            if (t.kind == TransitionClass::NuclearDQT)
                dqts.push_back(&t);
        }
        expect(sqts.size() == 6, "expected six single-quantum lines, got " +
                                     std::to_string(sqts.size()));
        expect(!dqts.empty(), "no double-quantum transitions found");
        for (const auto* d : dqts) {
            bool matched = false;
            for (size_t i = 0; i < sqts.size() && !matched; ++i)
                for (size_t j = 0; j < sqts.size() && !matched; ++j)
                    if (i != j &&
                        std::abs(sqts[i] + sqts[j] - d->frequency_MHz) <
                            1e-6 * d->frequency_MHz)
                        matched = true;
            expect(matched, "double-quantum line " + fmt17(d->frequency_MHz) +
                                " is not a sum of single steps");
        }
    });

    check("subharmonic drive rate matches the calibrated coefficient", [&] {
        const auto b = make_bench(pick_species(donors, "P"), 0.25);
        DriveSpec d;
        d.channel = DriveSpec::Channel::ElectricE2;
        d.model = pick_drive(drives, "P");
        const auto target = pick_target(b, d, 1e5);
        expect(target.harmonic == 2, "expected a subharmonic response");
        expect(std::abs(target.rate_Hz - 2718.0) < 30.0,
               "rate drifted: " + fmt17(target.rate_Hz) + " Hz");
    });

    check("transmission network conserves energy when lossless", [&] {
        const auto net = load_network_csv(net_path);
        expect(net.sections.size() >= 3, "unexpectedly small network");
        for (double f : {3.1e9, 6.9e9, 9.8e9}) {
            const auto t = s21(net, f);
            const auto r = s11(net, f);
            expect(std::abs(std::norm(t) + std::norm(r) - 1.0) < 1e-9,
                   "|S11|^2 + |S21|^2 != 1 at " + fmt17(f));
        }
    });

    check("scan writer is deterministic", [&] {
        SpectrumResult sp;
        sp.axis = {1.0 / 3.0, 2.0};
        sp.signal = {-1.0, 0.125};
        const auto a = (out / "validate_scratch_a.csv").string();
        const auto bpath = (out / "validate_scratch_b.csv").string();
        write_spectrum_csv(sp, a);
        write_spectrum_csv(sp, bpath);
        std::ifstream fa(a), fb(bpath);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        expect(sa.str() == sb.str(), "rewrite differs");
        fs::remove(a);
        fs::remove(bpath);
    });

    check("quantities round-trip through their canonical form", [&] {
        for (const auto& [text, unit] :
             std::vector<std::pair<std::string, std::string>>{
                 {"250 mT", "T"}, {"54 MHz", "Hz"}, {"6.75 GHz", "Hz"},
                 {"1e5 V/m", "V/m"}, {"10 um", "m"}}) {
            const double v = parse_quantity(text, unit);
            expect(parse_quantity(canon(v, unit), unit) == v,
                   "round trip broke for " + text);
        }
    });

    try {
        rc.record("checks_failed", std::to_string(failures));
        finish_manifest(rc, out, "validate", {});
    } catch (const std::exception& e) {
        return numeric_error("validate", e);
    }
    return failures == 0 ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Donor nuclear-spin drive simulator"};
    app.require_subcommand(1);

    Flags fl;
    app.add_option("--config", fl.config, "Config file (key = value with [sections])");
    app.add_option("--species", fl.species, "Donor species label");
    app.add_option("--b0", fl.b0, "Static field, e.g. '250 mT' or tesla");
    app.add_option("--channel", fl.channel, "Drive channel: electric | magnetic");
    app.add_option("--out", fl.out, "Output directory");
    app.add_option("--threads", fl.threads,
                   "Worker budget (results never depend on it)");
    app.add_option("--format", fl.format, "Output format (csv)");
    app.add_flag("--gnuplot", fl.gnuplot, "Also emit plot scripts");

    auto* levels = app.add_subcommand("levels", "Energy levels and transition table");
    auto* fsweep = app.add_subcommand("field-sweep", "Resonance fields across probe frequencies");
    auto* endor = app.add_subcommand("endor", "Inversion-recovery nuclear spectrum");
    auto* rabi = app.add_subcommand("rabi-map", "Contrast across drive duration and amplitude");
    auto* pbg = app.add_subcommand("pbg", "Resonator transmission, gap edges, mode fit");
    auto* validate = app.add_subcommand("validate", "Run the built-in invariant checks");
    for (auto* s : {levels, fsweep, endor, rabi, pbg, validate})
        s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (levels->parsed()) return cmd_levels(fl);
        if (fsweep->parsed()) return cmd_field_sweep(fl);
        if (endor->parsed()) return cmd_endor(fl);
        if (rabi->parsed()) return cmd_rabi_map(fl);
        if (pbg->parsed()) return cmd_pbg(fl);
        if (validate->parsed()) return cmd_validate(fl);
    } catch (const std::exception& e) {
        return config_error(e);
    }
    return 1;
}
