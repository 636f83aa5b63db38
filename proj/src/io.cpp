#include "ednmr/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ednmr {

namespace {

using nlohmann::json;

std::string trimmed(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

// scalar -> isotropic tensor, 3x3 array -> dense tensor
Matrix3 tensor_from(const json& j, const std::string& what) {
    if (j.is_number())
        return j.get<double>() * Matrix3::Identity();
    if (j.is_array() && j.size() == 3) {
        Matrix3 t;
        for (int r = 0; r < 3; ++r) {
            if (!j[r].is_array() || j[r].size() != 3)
                throw std::invalid_argument(what + " must be a 3x3 array");
            for (int c = 0; c < 3; ++c)
                t(r, c) = j[r][c].get<double>();
        }
        return t;
    }
    throw std::invalid_argument(what + " must be a number or a 3x3 array");
}

int axis_index(char c, const std::string& what) {
    switch (c) {
        case 'x': return 0;
        case 'y': return 1;
        case 'z': return 2;
    }
    throw std::invalid_argument(what + ": axis must be one of x, y, z");
}

// {"zx": v, ...} -> symmetric tensor entries
Matrix3 indexed_tensor(const json& j, const std::string& what) {
    Matrix3 t = Matrix3::Zero();
    for (const auto& [key, val] : j.items()) {
        if (key.size() != 2)
            throw std::invalid_argument(what + ": index '" + key +
                                        "' must name two axes");
        const int r = axis_index(key[0], what);
        const int c = axis_index(key[1], what);
        const double v = val.get<double>();
        t(r, c) = v;
        t(c, r) = v;
    }
    return t;
}

TensorResponse response_from(const json& j, const std::string& what) {
    TensorResponse r;
    if (j.contains("g"))
        r.g = indexed_tensor(j.at("g"), what + ".g");
    if (j.contains("hyperfine_mhz"))
        r.hyperfine_MHz =
            indexed_tensor(j.at("hyperfine_mhz"), what + ".hyperfine_mhz");
    if (j.contains("quadrupole_mhz"))
        r.quadrupole_MHz =
            indexed_tensor(j.at("quadrupole_mhz"), what + ".quadrupole_mhz");
    return r;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ','))
        out.push_back(trimmed(field));
    return out;
}

double parse_double(const std::string& s, const std::string& context) {
    size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(context + ": bad number '" + s + "'");
    }
    if (pos != s.size())
        throw std::runtime_error(context + ": bad number '" + s + "'");
    return v;
}

// numeric rows of a csv file, '#' comments and blank lines skipped
std::vector<std::vector<double>> load_rows(const std::string& path,
                                           size_t columns) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trimmed(line);
        if (line.empty())
            continue;
        const auto fields = split_fields(line);
        if (fields.size() != columns)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected " + std::to_string(columns) +
                                     " columns");
        std::vector<double> row;
        for (const auto& s : fields)
            row.push_back(
                parse_double(s, path + ":" + std::to_string(lineno)));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

double parse_quantity(const std::string& text, const std::string& base_unit) {
    std::string s = trimmed(text);
    if (s.empty())
        throw std::invalid_argument("empty quantity");
    if (!base_unit.empty()) {
        if (s.size() <= base_unit.size() ||
            s.compare(s.size() - base_unit.size(), base_unit.size(),
                      base_unit) != 0)
            throw std::invalid_argument("quantity '" + text +
                                        "' lacks unit " + base_unit);
        s = s.substr(0, s.size() - base_unit.size());
    }

    // whatever alphabetic (or multi-byte) tail remains is the SI prefix
    size_t cut = s.size();
    while (cut > 0 && (std::isalpha(static_cast<unsigned char>(s[cut - 1])) ||
                       static_cast<unsigned char>(s[cut - 1]) >= 0x80))
        --cut;
    const std::string prefix = s.substr(cut);
    const std::string num = trimmed(s.substr(0, cut));

    double scale = 1.0;
    if (prefix.empty())
        scale = 1.0;
    else if (prefix == "G")
        scale = 1e9;
    else if (prefix == "M")
        scale = 1e6;
    else if (prefix == "k")
        scale = 1e3;
    else if (prefix == "m")
        scale = 1e-3;
    else if (prefix == "u" || prefix == "µ" || prefix == "μ")
        scale = 1e-6;
    else if (prefix == "n")
        scale = 1e-9;
    else if (prefix == "p")
        scale = 1e-12;
    else
        throw std::invalid_argument("unknown unit prefix '" + prefix +
                                    "' in '" + text + "'");

    if (num.empty())
        throw std::invalid_argument("no number in quantity '" + text + "'");
    size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(num, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("cannot parse number in '" + text + "'");
    }
    if (pos != num.size())
        throw std::invalid_argument("cannot parse number in '" + text + "'");
    return v * scale;
}

std::map<std::string, SpinSystem> load_donor_library(const std::string& path) {
    const json j = load_json(path);
    if (!j.is_object() || j.empty())
        throw std::runtime_error(path + ": expected a species table");

    std::map<std::string, SpinSystem> out;
    for (const auto& [label, spec] : j.items()) {
        SpinSystem s;
        s.label = label;
        try {
            s.nuclear_spin = spec.at("nuclear_spin").get<double>();
            s.g_nuclear = spec.at("g_nuclear").get<double>();
            s.g_electron =
                tensor_from(spec.at("g_electron"), label + ".g_electron");
            s.hyperfine_MHz = tensor_from(spec.at("hyperfine_mhz"),
                                          label + ".hyperfine_mhz");
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ": " + label + ": " + e.what());
        }
        const double twice = 2.0 * s.nuclear_spin;
        if (s.nuclear_spin < 0.0 ||
            std::abs(twice - std::round(twice)) > 1e-9)
            throw std::invalid_argument(
                label + ": nuclear spin must be a half-integer");

        if (spec.contains("quadrupole_mhz")) {
            s.quadrupole_MHz = tensor_from(spec.at("quadrupole_mhz"),
                                           label + ".quadrupole_mhz");
        } else if (spec.contains("cq_mhz")) {
            // Cq/eta convention: principal values proportional to
            // (eta - 1, -eta - 1, 2), scaled by Cq / (4 I (2I - 1))
            if (s.nuclear_spin < 1.0)
                throw std::invalid_argument(
                    label + ": quadrupole coupling needs nuclear spin >= 1");
            const double cq = spec.at("cq_mhz").get<double>();
            const double eta = spec.value("eta", 0.0);
            const double k =
                cq / (4.0 * s.nuclear_spin * (2.0 * s.nuclear_spin - 1.0));
            s.quadrupole_MHz = Matrix3::Zero();
            s.quadrupole_MHz(0, 0) = k * (eta - 1.0);
            s.quadrupole_MHz(1, 1) = k * (-eta - 1.0);
            s.quadrupole_MHz(2, 2) = 2.0 * k;
        }
        out.emplace(label, std::move(s));
    }
    return out;
}

std::map<std::string, DriveModel> load_drive_library(const std::string& path) {
    const json j = load_json(path);
    const double strain = j.value("strain_scale", 0.0);
    if (!j.contains("species") || !j.at("species").is_object())
        throw std::runtime_error(path + ": expected a species table");

    std::map<std::string, DriveModel> out;
    for (const auto& [label, spec] : j.at("species").items()) {
        DriveModel m;
        m.strain_scale = strain;
        if (spec.contains("field_direction")) {
            const auto& d = spec.at("field_direction");
            if (!d.is_array() || d.size() != 3)
                throw std::invalid_argument(
                    label + ": field_direction must have three components");
            m.field_direction = Vector3(d[0].get<double>(),
                                        d[1].get<double>(),
                                        d[2].get<double>());
            if (m.field_direction.norm() == 0.0)
                throw std::invalid_argument(
                    label + ": field_direction must be nonzero");
        }
        if (spec.contains("second_harmonic_sign"))
            m.second_harmonic_sign =
                spec.at("second_harmonic_sign").get<double>();
        if (spec.contains("linear"))
            m.linear = response_from(spec.at("linear"), label + ".linear");
        if (spec.contains("quadratic"))
            m.quadratic =
                response_from(spec.at("quadratic"), label + ".quadratic");
        out.emplace(label, std::move(m));
    }
    return out;
}

TransmissionNetwork load_network_csv(const std::string& path) {
    const auto rows = load_rows(path, 4);
    if (rows.empty())
        throw std::runtime_error(path + ": no sections");
    TransmissionNetwork net;
    for (const auto& r : rows)
        net.sections.push_back({r[0], r[1], r[2], r[3]});
    return net;
}

void write_spectrum_csv(const SpectrumResult& spectrum,
                        const std::string& path) {
    if (spectrum.signal.size() != spectrum.axis.size())
        throw std::invalid_argument("spectrum axis and signal differ in length");
    if (!spectrum.extra.empty() &&
        spectrum.extra.size() != spectrum.axis.size())
        throw std::invalid_argument("spectrum extra column length mismatch");
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    for (const auto& [key, value] : spectrum.metadata)
        f << "# " << key << " = " << value << "\n";
    f << spectrum.axis_label << "," << spectrum.signal_label;
    if (!spectrum.extra.empty())
        f << "," << spectrum.extra_label;
    f << "\n";
    for (size_t k = 0; k < spectrum.axis.size(); ++k) {
        f << format_double(spectrum.axis[k]) << ","
          << format_double(spectrum.signal[k]);
        if (!spectrum.extra.empty())
            f << "," << format_double(spectrum.extra[k]);
        f << "\n";
    }
}

void write_map_csv(const Map2D& map, const std::string& path) {
    if (map.signal.size() != map.durations_s.size())
        throw std::invalid_argument("map rows must match the duration axis");
    for (const auto& row : map.signal)
        if (row.size() != map.amplitudes.size())
            throw std::invalid_argument(
                "map columns must match the amplitude axis");
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    for (const auto& [key, value] : map.metadata)
        f << "# " << key << " = " << value << "\n";
    for (double a : map.amplitudes)
        f << "," << format_double(a);
    f << "\n";
    for (size_t r = 0; r < map.signal.size(); ++r) {
        f << format_double(map.durations_s[r]);
        for (double v : map.signal[r])
            f << "," << format_double(v);
        f << "\n";
    }
}

FieldMapTable load_field_map_csv(const std::string& path) {
    const auto rows = load_rows(path, 5);
    if (rows.empty())
        throw std::runtime_error(path + ": empty field map");

    FieldMapTable map;
    for (const auto& r : rows) {
        map.x_m.push_back(r[0]);
        map.z_m.push_back(r[1]);
    }
    auto uniq = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(map.x_m);
    uniq(map.z_m);

    const size_t nx = map.x_m.size();
    const size_t nz = map.z_m.size();
    if (rows.size() != nx * nz)
        throw std::runtime_error(path +
                                 ": field map is not a complete rectangular grid");
    map.values.assign(nx * nz, FieldScales{});
    std::vector<char> seen(nx * nz, 0);
    for (const auto& r : rows) {
        const size_t ix =
            std::lower_bound(map.x_m.begin(), map.x_m.end(), r[0]) -
            map.x_m.begin();
        const size_t iz =
            std::lower_bound(map.z_m.begin(), map.z_m.end(), r[1]) -
            map.z_m.begin();
        const size_t idx = iz * nx + ix;
        if (seen[idx])
            throw std::runtime_error(path + ": duplicate field map node");
        seen[idx] = 1;
        map.values[idx] = {r[2], r[3], r[4]};
    }
    return map;
}

FieldScales sample_field_map(const FieldMapTable& map, double x_m,
                             double z_m) {
    const auto& xs = map.x_m;
    const auto& zs = map.z_m;
    if (xs.size() < 2 || zs.size() < 2)
        throw std::invalid_argument("field map needs a 2x2 grid at least");
    if (x_m < xs.front() || x_m > xs.back() || z_m < zs.front() ||
        z_m > zs.back())
        throw std::out_of_range("field map sample outside the tabulated grid");

    auto cell = [](const std::vector<double>& g, double v) {
        size_t i = std::upper_bound(g.begin(), g.end(), v) - g.begin();
        i = std::min(std::max<size_t>(i, 1), g.size() - 1);
        return i - 1;
    };
    const size_t ix = cell(xs, x_m);
    const size_t iz = cell(zs, z_m);
    const double tx = (x_m - xs[ix]) / (xs[ix + 1] - xs[ix]);
    const double tz = (z_m - zs[iz]) / (zs[iz + 1] - zs[iz]);

    auto at = [&](size_t jx, size_t jz) -> const FieldScales& {
        return map.values[jz * xs.size() + jx];
    };
    auto lerp2 = [&](auto get) {
        const double v00 = get(at(ix, iz));
        const double v10 = get(at(ix + 1, iz));
        const double v01 = get(at(ix, iz + 1));
        const double v11 = get(at(ix + 1, iz + 1));
        return (1 - tz) * ((1 - tx) * v00 + tx * v10) +
               tz * ((1 - tx) * v01 + tx * v11);
    };
    FieldScales out;
    out.b1 = lerp2([](const FieldScales& s) { return s.b1; });
    out.e2 = lerp2([](const FieldScales& s) { return s.e2; });
    out.b2 = lerp2([](const FieldScales& s) { return s.b2; });
    return out;
}

ImplantTable load_implant_csv(const std::string& path) {
    const auto rows = load_rows(path, 2);
    if (rows.size() < 2)
        throw std::runtime_error(path + ": implant table needs two rows or more");
    ImplantTable t;
    for (const auto& r : rows) {
        if (!t.depth_m.empty() && r[0] <= t.depth_m.back())
            throw std::runtime_error(path + ": depths must ascend");
        if (r[1] < 0.0)
            throw std::runtime_error(path + ": negative weight");
        t.depth_m.push_back(r[0]);
        t.weight.push_back(r[1]);
    }
    return t;
}

std::vector<double> implant_weights(const ImplantTable& table,
                                    const std::vector<double>& depth_grid) {
    if (depth_grid.empty())
        throw std::invalid_argument("depth grid must not be empty");
    std::vector<double> w(depth_grid.size(), 0.0);
    double total = 0.0;
    for (size_t k = 0; k < depth_grid.size(); ++k) {
        const double d = depth_grid[k];
        if (d < table.depth_m.front() || d > table.depth_m.back())
            continue;  // outside the tabulated profile there are no donors
        const size_t hi =
            std::min<size_t>(std::upper_bound(table.depth_m.begin(),
                                              table.depth_m.end(), d) -
                                 table.depth_m.begin(),
                             table.depth_m.size() - 1);
        const size_t lo = hi - 1;
        const double t =
            (d - table.depth_m[lo]) / (table.depth_m[hi] - table.depth_m[lo]);
        w[k] = (1.0 - t) * table.weight[lo] + t * table.weight[hi];
        total += w[k];
    }
    if (total <= 0.0)
        throw std::invalid_argument("implant table has no donors on the grid");
    for (auto& v : w)
        v /= total;
    return w;
}

EnsembleSpec build_ensemble(const FieldMapTable& map,
                            const ImplantProfile& profile,
                            const std::vector<double>& lateral_x_m,
                            const std::vector<double>& depth_grid_m) {
    if (lateral_x_m.empty())
        throw std::invalid_argument("lateral grid must not be empty");
    const auto depth_w = implant_weights(profile, depth_grid_m);
    std::vector<FieldScales> scales;
    scales.reserve(lateral_x_m.size() * depth_grid_m.size());
    for (double x : lateral_x_m)
        for (double d : depth_grid_m)
            scales.push_back(sample_field_map(map, x, d));
    return assemble_ensemble(scales, depth_w, depth_grid_m);
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>&
                        entries) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [key, value] : entries)
        j[key] = value;
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << "\n";
}

} // namespace ednmr
