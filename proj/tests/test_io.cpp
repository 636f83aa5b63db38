#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ednmr/io.hpp"
#include "support/drives.hpp"
#include "support/systems.hpp"

using namespace ednmr;

namespace {

std::string data_path(const std::string& name) {
    const char* dir = std::getenv("EDNMR_DATA_DIR");
    REQUIRE(dir != nullptr);
    return std::string(dir) + "/" + name;
}

std::string write_file(const std::string& name, const std::string& text) {
    std::ofstream f(name);
    REQUIRE(f.good());
    f << text;
    return name;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

TEST_SUITE("quantity parsing") {
    TEST_CASE("prefixed magnitudes against their base unit") {
        CHECK(parse_quantity("250 mT", "T") == doctest::Approx(0.25).epsilon(1e-15));
        CHECK(parse_quantity("54 MHz", "Hz") == 54e6);
        CHECK(parse_quantity("6.75 GHz", "Hz") == 6.75e9);
        CHECK(parse_quantity("0.25 T", "T") == 0.25);
        CHECK(parse_quantity("1.9 K", "K") == 1.9);
        CHECK(parse_quantity("4 mm", "m") == doctest::Approx(4e-3).epsilon(1e-15));
        CHECK(parse_quantity("10 um", "m") == doctest::Approx(10e-6).epsilon(1e-15));
        CHECK(parse_quantity("10 µm", "m") == doctest::Approx(10e-6).epsilon(1e-15));
        CHECK(parse_quantity("7 nm", "m") == doctest::Approx(7e-9).epsilon(1e-15));
        CHECK(parse_quantity("2 pF", "F") == doctest::Approx(2e-12).epsilon(1e-15));
        CHECK(parse_quantity("3 kV", "V") == 3000.0);
        CHECK(parse_quantity("1e5 V/m", "V/m") == 1e5);
        CHECK(parse_quantity("-3.5 kHz", "Hz") == -3500.0);
    }

    TEST_CASE("whitespace and attachment are free-form") {
        CHECK(parse_quantity("54MHz", "Hz") == 54e6);
        CHECK(parse_quantity("  0.25 T  ", "T") == 0.25);
        CHECK(parse_quantity("2.5e9", "") == 2.5e9);
    }

    TEST_CASE("malformed quantities are rejected") {
        CHECK_THROWS_AS(parse_quantity("54 MHz", "T"), std::invalid_argument);
        CHECK_THROWS_AS(parse_quantity("250 qT", "T"), std::invalid_argument);
        CHECK_THROWS_AS(parse_quantity("abc T", "T"), std::invalid_argument);
        CHECK_THROWS_AS(parse_quantity("", "T"), std::invalid_argument);
        CHECK_THROWS_AS(parse_quantity("T", "T"), std::invalid_argument);
        CHECK_THROWS_AS(parse_quantity("1..5 T", "T"), std::invalid_argument);
    }
}

TEST_SUITE("donor library") {
    TEST_CASE("shipped file matches the built-in reference sets") {
        const auto lib = load_donor_library(data_path("donors.json"));
        REQUIRE(lib.count("P") == 1);
        REQUIRE(lib.count("As") == 1);
        REQUIRE(lib.count("Bi") == 1);

        const auto ref_p = testsys::phosphorus();
        const auto& p = lib.at("P");
        CHECK(p.label == "P");
        CHECK(p.nuclear_spin == ref_p.nuclear_spin);
        CHECK(p.g_nuclear == ref_p.g_nuclear);
        CHECK((p.g_electron - ref_p.g_electron).norm() == 0.0);
        CHECK((p.hyperfine_MHz - ref_p.hyperfine_MHz).norm() == 0.0);
        CHECK(p.quadrupole_MHz.norm() == 0.0);

        const auto ref_as = testsys::arsenic();
        const auto& as = lib.at("As");
        CHECK(as.label == "As");
        CHECK(as.nuclear_spin == ref_as.nuclear_spin);
        CHECK(as.g_nuclear == ref_as.g_nuclear);
        CHECK((as.g_electron - ref_as.g_electron).norm() == 0.0);
        CHECK((as.hyperfine_MHz - ref_as.hyperfine_MHz).norm() == 0.0);
        CHECK(as.quadrupole_MHz.norm() == 0.0);

        const auto& bi = lib.at("Bi");
        CHECK(bi.nuclear_spin == 4.5);
        CHECK(bi.g_electron(1, 1) == 2.0003);
        CHECK(bi.g_nuclear == 0.914);
        CHECK(bi.hyperfine_MHz(2, 2) == 1475.4);
    }

    TEST_CASE("quadrupole from coupling constant and asymmetry") {
        const auto path = write_file("tmp_io_cq.json", R"({
            "X": {"nuclear_spin": 1.5, "g_electron": 2.0, "g_nuclear": 1.0,
                  "hyperfine_mhz": 100.0, "cq_mhz": 6.0, "eta": 0.4}
        })");
        const auto lib = load_donor_library(path);
        const auto& q = lib.at("X").quadrupole_MHz;
        // k = cq / (4 I (2I - 1)) = 0.5 here
        CHECK(q(0, 0) == doctest::Approx(-0.3).epsilon(1e-15));
        CHECK(q(1, 1) == doctest::Approx(-0.7).epsilon(1e-15));
        CHECK(q(2, 2) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(std::abs(q.trace()) < 1e-15);
        CHECK((q - q.transpose()).norm() == 0.0);
    }

    TEST_CASE("raw quadrupole tensors load verbatim") {
        const auto path = write_file("tmp_io_rawq.json", R"({
            "X": {"nuclear_spin": 1.5, "g_electron": 2.0, "g_nuclear": 1.0,
                  "hyperfine_mhz": 100.0,
                  "quadrupole_mhz": [[0.1, 0, 0.05], [0, 0.2, 0], [0.05, 0, -0.3]]}
        })");
        const auto& q = load_donor_library(path).at("X").quadrupole_MHz;
        CHECK(q(0, 0) == 0.1);
        CHECK(q(0, 2) == 0.05);
        CHECK(q(2, 0) == 0.05);
        CHECK(q(2, 2) == -0.3);
    }

    TEST_CASE("tensor fields accept full 3x3 arrays") {
        const auto path = write_file("tmp_io_aniso.json", R"({
            "X": {"nuclear_spin": 0.5,
                  "g_electron": [[2.0, 0, 0.01], [0, 2.0, 0], [0.01, 0, 1.99]],
                  "g_nuclear": 1.0, "hyperfine_mhz": 117.5}
        })");
        const auto& g = load_donor_library(path).at("X").g_electron;
        CHECK(g(0, 2) == 0.01);
        CHECK(g(2, 2) == 1.99);
        CHECK(g(1, 1) == 2.0);
    }

    TEST_CASE("invalid donor files are rejected") {
        // coupling constant on a doublet nucleus
        const auto half = write_file("tmp_io_cq_half.json", R"({
            "X": {"nuclear_spin": 0.5, "g_electron": 2.0, "g_nuclear": 1.0,
                  "hyperfine_mhz": 100.0, "cq_mhz": 1.0}
        })");
        CHECK_THROWS_AS(load_donor_library(half), std::invalid_argument);

        const auto spin = write_file("tmp_io_badspin.json", R"({
            "X": {"nuclear_spin": 0.3, "g_electron": 2.0, "g_nuclear": 1.0,
                  "hyperfine_mhz": 100.0}
        })");
        CHECK_THROWS_AS(load_donor_library(spin), std::invalid_argument);

        const auto missing = write_file("tmp_io_missing.json", R"({
            "X": {"nuclear_spin": 0.5, "g_nuclear": 1.0, "hyperfine_mhz": 1.0}
        })");
        CHECK_THROWS_AS(load_donor_library(missing), std::runtime_error);

        const auto shape = write_file("tmp_io_shape.json", R"({
            "X": {"nuclear_spin": 0.5, "g_electron": [[2.0, 0], [0, 2.0]],
                  "g_nuclear": 1.0, "hyperfine_mhz": 1.0}
        })");
        CHECK_THROWS_AS(load_donor_library(shape), std::invalid_argument);

        const auto array = write_file("tmp_io_array.json", "[1, 2]\n");
        CHECK_THROWS_AS(load_donor_library(array), std::runtime_error);

        CHECK_THROWS_AS(load_donor_library("tmp_io_does_not_exist.json"),
                        std::runtime_error);
    }
}

TEST_SUITE("drive library") {
    TEST_CASE("shipped file matches the built-in reference sets") {
        const auto lib = load_drive_library(data_path("drive_coefficients.json"));
        REQUIRE(lib.count("P") == 1);
        REQUIRE(lib.count("As") == 1);

        const auto ref_p = testsys::phosphorus_drive();
        const auto& p = lib.at("P");
        CHECK((p.field_direction - ref_p.field_direction).norm() == 0.0);
        CHECK(p.strain_scale == ref_p.strain_scale);
        CHECK(p.second_harmonic_sign == ref_p.second_harmonic_sign);
        CHECK((p.linear.g - ref_p.linear.g).norm() == 0.0);
        CHECK((p.quadratic.g - ref_p.quadratic.g).norm() == 0.0);
        CHECK(p.linear.quadrupole_MHz.norm() == 0.0);
        CHECK(p.quadratic.hyperfine_MHz.norm() == 0.0);

        const auto ref_as = testsys::arsenic_drive();
        const auto& as = lib.at("As");
        CHECK((as.field_direction - ref_as.field_direction).norm() == 0.0);
        CHECK(as.strain_scale == ref_as.strain_scale);
        CHECK((as.linear.quadrupole_MHz - ref_as.linear.quadrupole_MHz).norm() ==
              0.0);
        CHECK((as.quadratic.quadrupole_MHz -
               ref_as.quadratic.quadrupole_MHz).norm() == 0.0);
        CHECK(as.linear.g.norm() == 0.0);
        CHECK(as.quadratic.g.norm() == 0.0);
    }

    TEST_CASE("index pairs land symmetrically") {
        const auto path = write_file("tmp_io_drive.json", R"({
            "strain_scale": 0.5,
            "species": {
                "X": {"second_harmonic_sign": 1,
                      "quadratic": {"hyperfine_mhz": {"zx": 2e-12, "yy": 3e-12}}}
            }
        })");
        const auto& m = load_drive_library(path).at("X");
        CHECK(m.strain_scale == 0.5);
        CHECK(m.second_harmonic_sign == 1.0);
        CHECK(m.quadratic.hyperfine_MHz(0, 2) == 2e-12);
        CHECK(m.quadratic.hyperfine_MHz(2, 0) == 2e-12);
        CHECK(m.quadratic.hyperfine_MHz(1, 1) == 3e-12);
        CHECK(m.linear.hyperfine_MHz.norm() == 0.0);
        // direction defaults to the device normal convention
        CHECK((m.field_direction - Vector3::UnitX()).norm() == 0.0);
    }

    TEST_CASE("invalid drive files are rejected") {
        const auto axis = write_file("tmp_io_drive_axis.json", R"({
            "species": {"X": {"linear": {"g": {"za": 1.0}}}}
        })");
        CHECK_THROWS_AS(load_drive_library(axis), std::invalid_argument);

        const auto pair = write_file("tmp_io_drive_pair.json", R"({
            "species": {"X": {"linear": {"g": {"zxx": 1.0}}}}
        })");
        CHECK_THROWS_AS(load_drive_library(pair), std::invalid_argument);

        const auto dir = write_file("tmp_io_drive_dir.json", R"({
            "species": {"X": {"field_direction": [0, 0, 0]}}
        })");
        CHECK_THROWS_AS(load_drive_library(dir), std::invalid_argument);

        const auto flat = write_file("tmp_io_drive_flat.json", R"({
            "X": {"linear": {"g": {"zx": 1.0}}}
        })");
        CHECK_THROWS_AS(load_drive_library(flat), std::runtime_error);
    }
}

TEST_SUITE("network files") {
    TEST_CASE("shipped resonator network") {
        const auto net = load_network_csv(data_path("pbg_paper.csv"));
        REQUIRE(net.sections.size() == 21);
        CHECK(net.port_impedance_ohm == 50.0);
        CHECK(net.sections.front().impedance_ohm == 95.0);
        CHECK(net.sections[10].impedance_ohm == 50.0);
        CHECK(net.sections[10].length_m == 6e-3);

        const double eps = calibrated_permittivity(6.75e9, 4e-3);
        for (const auto& s : net.sections) {
            CHECK(s.eff_permittivity ==
                  doctest::Approx(eps).epsilon(1e-12));
            CHECK(s.loss_dB_per_m == 0.0);
            CHECK((s.impedance_ohm == 50.0 ? s.length_m == 6e-3
                                           : s.length_m == 4e-3));
        }
        for (size_t k = 0; k < net.sections.size(); ++k)
            CHECK(net.sections[k].impedance_ohm ==
                  net.sections[net.sections.size() - 1 - k].impedance_ohm);
    }

    TEST_CASE("lossy variant differs only in the loss column") {
        const auto clean = load_network_csv(data_path("pbg_paper.csv"));
        const auto lossy = load_network_csv(data_path("pbg_paper_lossy.csv"));
        REQUIRE(lossy.sections.size() == clean.sections.size());
        for (size_t k = 0; k < lossy.sections.size(); ++k) {
            CHECK(lossy.sections[k].impedance_ohm ==
                  clean.sections[k].impedance_ohm);
            CHECK(lossy.sections[k].length_m == clean.sections[k].length_m);
            CHECK(lossy.sections[k].eff_permittivity ==
                  clean.sections[k].eff_permittivity);
            CHECK(lossy.sections[k].loss_dB_per_m == 0.067);
        }
    }

    TEST_CASE("shipped network reproduces the designed defect mode") {
        const auto net = load_network_csv(data_path("pbg_paper.csv"));
        std::vector<double> grid(1201);
        for (size_t k = 0; k < grid.size(); ++k)
            grid[k] = 7.7605e9 + (7.7645e9 - 7.7605e9) * k / (grid.size() - 1);
        const auto sweep = sweep_s21(net, grid);
        const auto fit = resonance_fit(sweep, grid.front(), grid.back());
        CHECK(fit.f0_hz == doctest::Approx(7.762492e9).epsilon(1e-5));
        CHECK(fit.loaded_q == doctest::Approx(61917.0).epsilon(0.02));
    }

    TEST_CASE("malformed network files are rejected") {
        const auto cols = write_file("tmp_io_net_cols.csv", "50,0.004,7.7\n");
        CHECK_THROWS_AS(load_network_csv(cols), std::runtime_error);

        const auto word = write_file("tmp_io_net_word.csv",
                                     "50,0.004,seven,0\n");
        CHECK_THROWS_AS(load_network_csv(word), std::runtime_error);

        const auto empty = write_file("tmp_io_net_empty.csv",
                                      "# only a comment\n\n");
        CHECK_THROWS_AS(load_network_csv(empty), std::runtime_error);

        CHECK_THROWS_AS(load_network_csv("tmp_io_no_such.csv"),
                        std::runtime_error);
    }
}

TEST_SUITE("scan writers") {
    TEST_CASE("spectrum files are deterministic and round-trip exactly") {
        SpectrumResult sp;
        sp.axis_label = "f_hz";
        sp.signal_label = "s21_db";
        sp.axis = {1.0 / 3.0, 2.5e9, 6.626e-34};
        sp.signal = {-81.031, 123456789.123456789, -2.5};
        sp.metadata = {{"species", "As"}, {"b0_tesla", "0.25"}};

        write_spectrum_csv(sp, "tmp_io_sp_a.csv");
        write_spectrum_csv(sp, "tmp_io_sp_b.csv");
        const auto text = slurp("tmp_io_sp_a.csv");
        CHECK(text == slurp("tmp_io_sp_b.csv"));

        CHECK(text.find("# species = As\n") != std::string::npos);
        CHECK(text.find("# b0_tesla = 0.25\n") != std::string::npos);
        CHECK(text.find("f_hz,s21_db\n") != std::string::npos);

        // every value must come back bit for bit
        std::istringstream in(text);
        std::string line;
        size_t row = 0;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#' || line[0] == 'f')
                continue;
            const auto comma = line.find(',');
            REQUIRE(comma != std::string::npos);
            CHECK(std::stod(line.substr(0, comma)) == sp.axis[row]);
            CHECK(std::stod(line.substr(comma + 1)) == sp.signal[row]);
            ++row;
        }
        CHECK(row == sp.axis.size());
    }

    TEST_CASE("optional second column") {
        SpectrumResult sp;
        sp.axis_label = "f_hz";
        sp.signal_label = "s21_db";
        sp.extra_label = "s21_phase_rad";
        sp.axis = {1.0, 2.0};
        sp.signal = {-3.0, -6.0};
        sp.extra = {0.25, -0.75};
        write_spectrum_csv(sp, "tmp_io_sp_extra.csv");
        const auto text = slurp("tmp_io_sp_extra.csv");
        CHECK(text.find("f_hz,s21_db,s21_phase_rad\n") != std::string::npos);
        CHECK(text.find("1,-3,0.25\n") != std::string::npos);
        CHECK(text.find("2,-6,-0.75\n") != std::string::npos);
    }

    TEST_CASE("inconsistent spectra are rejected") {
        SpectrumResult sp;
        sp.axis = {1.0, 2.0};
        sp.signal = {1.0};
        CHECK_THROWS_AS(write_spectrum_csv(sp, "tmp_io_sp_bad.csv"),
                        std::invalid_argument);
        sp.signal = {1.0, 2.0};
        sp.extra = {1.0};
        CHECK_THROWS_AS(write_spectrum_csv(sp, "tmp_io_sp_bad.csv"),
                        std::invalid_argument);
        sp.extra.clear();
        CHECK_THROWS_AS(write_spectrum_csv(sp, "/no_such_dir_xyz/sp.csv"),
                        std::runtime_error);
    }

    TEST_CASE("map files carry both axes") {
        Map2D map;
        map.durations_s = {1e-6, 2e-6};
        map.amplitudes = {0.5, 1.0, 1.5};
        map.signal = {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}};
        map.metadata = {{"species", "P"}};
        write_map_csv(map, "tmp_io_map_a.csv");
        write_map_csv(map, "tmp_io_map_b.csv");
        const auto text = slurp("tmp_io_map_a.csv");
        CHECK(text == slurp("tmp_io_map_b.csv"));
        CHECK(text.find("# species = P\n") != std::string::npos);
        const std::string amps =
            "," + fmt17(0.5) + "," + fmt17(1.0) + "," + fmt17(1.5) + "\n";
        CHECK(text.find(amps) != std::string::npos);
        const std::string row = fmt17(1e-6) + "," + fmt17(0.1) + "," +
                                fmt17(0.2) + "," + fmt17(0.3) + "\n";
        CHECK(text.find(row) != std::string::npos);

        map.signal[1].pop_back();
        CHECK_THROWS_AS(write_map_csv(map, "tmp_io_map_bad.csv"),
                        std::invalid_argument);
    }
}

TEST_SUITE("field map tables") {
    // bilinear test function: exactly representable by the interpolant
    constexpr double kB1[4] = {2.0, 3.0, 5.0, 7.0};
    constexpr double kE2[4] = {1.0, -2.0, 4.0, 0.5};
    constexpr double kB2[4] = {0.0, 1.0, -1.0, 2.0};
    double shape(const double c[4], double x, double z) {
        return c[0] + c[1] * x + c[2] * z + c[3] * x * z;
    }

    std::string grid_file() {
        // rows deliberately shuffled; loader must not care about order
        const double xs[3] = {0.0, 1.0, 3.0};
        const double zs[2] = {0.0, 2.0};
        std::ostringstream out;
        out << "# x, z, b1, e2, b2\n\n";
        const int order[6][2] = {{1, 1}, {0, 0}, {2, 1}, {1, 0}, {0, 1}, {2, 0}};
        for (const auto& iz_ix : order) {
            const double x = xs[iz_ix[0]];
            const double z = zs[iz_ix[1]];
            out << fmt17(x) << "," << fmt17(z) << ","
                << fmt17(shape(kB1, x, z)) << "," << fmt17(shape(kE2, x, z))
                << "," << fmt17(shape(kB2, x, z)) << "\n";
        }
        return write_file("tmp_io_fieldmap.csv", out.str());
    }

    TEST_CASE("nodes are recovered exactly and interior points bilinearly") {
        const auto map = load_field_map_csv(grid_file());
        REQUIRE(map.x_m.size() == 3);
        REQUIRE(map.z_m.size() == 2);

        const auto node = sample_field_map(map, 3.0, 2.0);
        CHECK(node.b1 == shape(kB1, 3.0, 2.0));
        CHECK(node.e2 == shape(kE2, 3.0, 2.0));
        CHECK(node.b2 == shape(kB2, 3.0, 2.0));

        const auto mid = sample_field_map(map, 0.5, 0.75);
        CHECK(mid.b1 == doctest::Approx(shape(kB1, 0.5, 0.75)).epsilon(1e-14));
        CHECK(mid.e2 == doctest::Approx(shape(kE2, 0.5, 0.75)).epsilon(1e-14));
        CHECK(mid.b2 == doctest::Approx(shape(kB2, 0.5, 0.75)).epsilon(1e-14));

        const auto edge = sample_field_map(map, 2.0, 0.0);
        CHECK(edge.b1 == doctest::Approx(shape(kB1, 2.0, 0.0)).epsilon(1e-14));
    }

    TEST_CASE("samples outside the hull are refused") {
        const auto map = load_field_map_csv(grid_file());
        CHECK_THROWS_AS(sample_field_map(map, -0.1, 1.0), std::out_of_range);
        CHECK_THROWS_AS(sample_field_map(map, 3.1, 1.0), std::out_of_range);
        CHECK_THROWS_AS(sample_field_map(map, 1.0, -0.1), std::out_of_range);
        CHECK_THROWS_AS(sample_field_map(map, 1.0, 2.1), std::out_of_range);
    }

    TEST_CASE("broken grids are rejected") {
        const auto incomplete = write_file("tmp_io_fm_incomplete.csv",
                                           "0,0,1,1,1\n"
                                           "1,0,1,1,1\n"
                                           "0,2,1,1,1\n");
        CHECK_THROWS_AS(load_field_map_csv(incomplete), std::runtime_error);

        const auto dup = write_file("tmp_io_fm_dup.csv",
                                    "0,0,1,1,1\n"
                                    "1,0,1,1,1\n"
                                    "0,2,1,1,1\n"
                                    "0,2,1,1,1\n");
        CHECK_THROWS_AS(load_field_map_csv(dup), std::runtime_error);

        const auto thin = write_file("tmp_io_fm_thin.csv",
                                     "0,0,1,1,1\n"
                                     "0,1,2,2,2\n");
        const auto map = load_field_map_csv(thin);
        CHECK_THROWS_AS(sample_field_map(map, 0.0, 0.5),
                        std::invalid_argument);

        CHECK_THROWS_AS(load_field_map_csv("tmp_io_fm_missing.csv"),
                        std::runtime_error);
    }
}

TEST_SUITE("implant tables") {
    TEST_CASE("interpolated weights normalize over the grid") {
        const auto path = write_file("tmp_io_implant.csv",
                                     "# depth_m, weight\n"
                                     "0,0\n"
                                     "1e-6,2\n"
                                     "2e-6,1\n");
        const auto table = load_implant_csv(path);
        const auto w = implant_weights(table, {0.5e-6, 1.5e-6});
        REQUIRE(w.size() == 2);
        CHECK(w[0] == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(w[1] == doctest::Approx(0.6).epsilon(1e-12));

        // grid points beyond the tabulated range hold no donors
        const auto w3 = implant_weights(table, {0.5e-6, 1.5e-6, 5e-6});
        CHECK(w3[2] == 0.0);
        CHECK(w3[0] + w3[1] == doctest::Approx(1.0).epsilon(1e-12));

        const auto node = implant_weights(table, {1e-6});
        CHECK(node[0] == 1.0);
    }

    TEST_CASE("degenerate tables and grids are rejected") {
        const auto path = write_file("tmp_io_implant2.csv",
                                     "0,0\n1e-6,2\n2e-6,1\n");
        const auto table = load_implant_csv(path);
        CHECK_THROWS_AS(implant_weights(table, {5e-6, 7e-6}),
                        std::invalid_argument);
        CHECK_THROWS_AS(implant_weights(table, {}), std::invalid_argument);

        const auto unordered = write_file("tmp_io_implant_desc.csv",
                                          "2e-6,1\n1e-6,2\n");
        CHECK_THROWS_AS(load_implant_csv(unordered), std::runtime_error);

        const auto negative = write_file("tmp_io_implant_neg.csv",
                                         "0,1\n1e-6,-2\n");
        CHECK_THROWS_AS(load_implant_csv(negative), std::runtime_error);

        const auto single = write_file("tmp_io_implant_one.csv", "0,1\n");
        CHECK_THROWS_AS(load_implant_csv(single), std::runtime_error);
    }
}

TEST_SUITE("ensemble from a tabulated map") {
    TEST_CASE("tabulating the analytic fields reproduces the analytic build") {
        CpwGeometry geom;
        geom.sample_standoff_m = 0.0;  // map heights and depths coincide

        std::vector<double> xs, zs;
        for (int k = 0; k < 9; ++k)
            xs.push_back(15e-6 * k / 8.0);
        for (int k = 0; k < 6; ++k)
            zs.push_back(0.2e-6 + (2.0e-6 - 0.2e-6) * k / 5.0);

        std::vector<Eigen::Vector2d> pts;
        for (double x : xs)
            for (double z : zs)
                pts.emplace_back(x, z);
        const auto scales = cpw_fields(geom, pts);

        std::ostringstream out;
        size_t idx = 0;
        for (double x : xs)
            for (double z : zs) {
                const auto& s = scales[idx++];
                out << fmt17(x) << "," << fmt17(z) << "," << fmt17(s.b1)
                    << "," << fmt17(s.e2) << "," << fmt17(s.b2) << "\n";
            }
        const auto path = write_file("tmp_io_cpw_map.csv", out.str());
        const auto map = load_field_map_csv(path);

        ImplantProfile prof;
        prof.species.push_back({1.0e-6, 0.3e-6, 1.0});
        prof.epilayer_thickness_m = 3e-6;

        const auto direct = build_ensemble(geom, prof, xs, zs);
        const auto tabulated = build_ensemble(map, prof, xs, zs);

        REQUIRE(direct.points.size() == tabulated.points.size());
        double total = 0.0;
        for (size_t k = 0; k < direct.points.size(); ++k) {
            CHECK(tabulated.points[k].weight == direct.points[k].weight);
            CHECK(tabulated.points[k].b1_scale == direct.points[k].b1_scale);
            CHECK(tabulated.points[k].e2_scale == direct.points[k].e2_scale);
            CHECK(tabulated.points[k].b2_scale == direct.points[k].b2_scale);
            CHECK(tabulated.points[k].depth_m == direct.points[k].depth_m);
            total += tabulated.points[k].weight;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("empty lateral grid is rejected") {
        const auto path = write_file("tmp_io_square_map.csv",
                                     "0,0,1,1,1\n"
                                     "0,2e-6,1,1,1\n"
                                     "1e-6,0,1,1,1\n"
                                     "1e-6,2e-6,1,1,1\n");
        const auto map = load_field_map_csv(path);
        ImplantProfile prof;
        prof.species.push_back({1.0e-6, 0.3e-6, 1.0});
        CHECK_THROWS_AS(build_ensemble(map, prof, {}, {1e-6}),
                        std::invalid_argument);
    }
}

TEST_SUITE("manifests") {
    TEST_CASE("identical entries write identical bytes in order") {
        const std::vector<std::pair<std::string, std::string>> entries = {
            {"command", "levels"}, {"species", "As"}, {"b0", "0.25 T"}};
        write_manifest("tmp_io_man_a.json", entries);
        write_manifest("tmp_io_man_b.json", entries);
        const auto text = slurp("tmp_io_man_a.json");
        CHECK(text == slurp("tmp_io_man_b.json"));
        CHECK(text.find("\"command\": \"levels\"") != std::string::npos);
        CHECK(text.find("\"b0\": \"0.25 T\"") != std::string::npos);
        // insertion order survives
        CHECK(text.find("command") < text.find("species"));
        CHECK(text.find("species") < text.find("b0"));

        CHECK_THROWS_AS(write_manifest("/no_such_dir_xyz/m.json", entries),
                        std::runtime_error);
    }
}
