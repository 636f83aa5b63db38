#include "ednmr/pbgnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ednmr/constants.hpp"

namespace ednmr {

namespace {

constexpr double c_m_s = PhysicalConstants::speed_of_light_m_s;

void validate_section(const LineSection& sec) {
    if (!(sec.impedance_ohm > 0.0))
        throw std::invalid_argument("section impedance must be positive");
    if (sec.length_m < 0.0)
        throw std::invalid_argument("section length must be non-negative");
    if (sec.eff_permittivity < 1.0)
        throw std::invalid_argument(
            "effective permittivity must be at least 1");
    if (sec.loss_dB_per_m < 0.0)
        throw std::invalid_argument("section loss must be non-negative");
}

void validate_network(const TransmissionNetwork& net) {
    if (net.sections.empty())
        throw std::invalid_argument("network has no sections");
    if (!(net.port_impedance_ohm > 0.0))
        throw std::invalid_argument("port impedance must be positive");
}

// Chain matrix of the whole cascade.
Eigen::Matrix2cd cascade(const TransmissionNetwork& net, double f_hz) {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity();
    for (const auto& sec : net.sections)
        m *= abcd(sec, f_hz);
    return m;
}

std::complex<double> s21_denominator(const Eigen::Matrix2cd& m, double z0) {
    return m(0, 0) + m(0, 1) / z0 + m(1, 0) * z0 + m(1, 1);
}

struct Run {
    size_t first;
    size_t last;  // inclusive
};

} // namespace

Eigen::Matrix2cd abcd(const LineSection& sec, double f_hz) {
    validate_section(sec);
    if (!(f_hz > 0.0))
        throw std::invalid_argument("frequency must be positive");
    // gamma = alpha + i beta, loss converted from dB/m to Np/m
    const double alpha_np = sec.loss_dB_per_m * std::log(10.0) / 20.0;
    const double beta =
        2.0 * M_PI * f_hz * std::sqrt(sec.eff_permittivity) / c_m_s;
    const std::complex<double> gl(alpha_np * sec.length_m,
                                  beta * sec.length_m);
    const std::complex<double> ch = std::cosh(gl);
    const std::complex<double> sh = std::sinh(gl);
    Eigen::Matrix2cd m;
    m << ch, sec.impedance_ohm * sh, sh / sec.impedance_ohm, ch;
    return m;
}

std::complex<double> s21(const TransmissionNetwork& net, double f_hz) {
    validate_network(net);
    const auto m = cascade(net, f_hz);
    return 2.0 / s21_denominator(m, net.port_impedance_ohm);
}

std::complex<double> s11(const TransmissionNetwork& net, double f_hz) {
    validate_network(net);
    const auto m = cascade(net, f_hz);
    const double z0 = net.port_impedance_ohm;
    return (m(0, 0) + m(0, 1) / z0 - m(1, 0) * z0 - m(1, 1)) /
           s21_denominator(m, z0);
}

SpectrumResult sweep_s21(const TransmissionNetwork& net,
                         const std::vector<double>& f_grid_hz) {
    validate_network(net);
    if (f_grid_hz.empty())
        throw std::invalid_argument("frequency grid is empty");
    for (size_t k = 0; k < f_grid_hz.size(); ++k) {
        if (!(f_grid_hz[k] > 0.0))
            throw std::invalid_argument("frequency grid must be positive");
        if (k > 0 && f_grid_hz[k] <= f_grid_hz[k - 1])
            throw std::invalid_argument("frequency grid must be ascending");
    }

    SpectrumResult out;
    out.axis_label = "f_hz";
    out.signal_label = "s21_db";
    out.extra_label = "s21_phase_rad";
    out.axis = f_grid_hz;
    out.signal.reserve(f_grid_hz.size());
    out.extra.reserve(f_grid_hz.size());
    for (double f : f_grid_hz) {
        const auto t = s21(net, f);
        out.signal.push_back(20.0 * std::log10(std::abs(t)));
        out.extra.push_back(std::arg(t));
    }
    out.metadata.emplace_back("port_impedance_ohm",
                              std::to_string(net.port_impedance_ohm));
    out.metadata.emplace_back("sections",
                              std::to_string(net.sections.size()));
    return out;
}

std::optional<BandgapEdges> bandgap_edges(const SpectrumResult& sweep,
                                          double threshold_dB) {
    const auto& f = sweep.axis;
    const auto& db = sweep.signal;
    if (f.size() != db.size() || f.size() < 2)
        throw std::invalid_argument("sweep needs at least two points");

    std::vector<Run> runs;
    for (size_t k = 0; k < db.size();) {
        if (db[k] < threshold_dB) {
            size_t j = k;
            while (j + 1 < db.size() && db[j + 1] < threshold_dB)
                ++j;
            runs.push_back({k, j});
            k = j + 1;
        } else {
            ++k;
        }
    }
    if (runs.empty())
        return std::nullopt;

    // A sharp transmission window inside the stopband (the defect mode) is
    // much narrower than the gap halves it separates; bridge those.
    std::vector<Run> merged{runs.front()};
    for (size_t k = 1; k < runs.size(); ++k) {
        const Run& prev = merged.back();
        const Run& cur = runs[k];
        const double hole = f[cur.first] - f[prev.last];
        const double w_prev = f[prev.last] - f[prev.first];
        const double w_cur = f[cur.last] - f[cur.first];
        if (hole < 0.2 * std::min(w_prev, w_cur))
            merged.back().last = cur.last;
        else
            merged.push_back(cur);
    }
    const Run widest = *std::max_element(
        merged.begin(), merged.end(), [&](const Run& a, const Run& b) {
            return f[a.last] - f[a.first] < f[b.last] - f[b.first];
        });

    // linear interpolation of the threshold crossing on both flanks
    auto cross = [&](size_t inside, size_t outside) {
        const double d0 = db[outside] - threshold_dB;
        const double d1 = db[inside] - threshold_dB;
        return f[outside] + (f[inside] - f[outside]) * d0 / (d0 - d1);
    };
    BandgapEdges e;
    e.f_low_hz = widest.first > 0 ? cross(widest.first, widest.first - 1)
                                  : f[widest.first];
    e.f_high_hz = widest.last + 1 < f.size()
                      ? cross(widest.last, widest.last + 1)
                      : f[widest.last];
    return e;
}

ResonanceFit resonance_fit(const SpectrumResult& sweep, double f_lo_hz,
                           double f_hi_hz) {
    const auto& f = sweep.axis;
    const auto& db = sweep.signal;
    if (f.size() != db.size())
        throw std::invalid_argument("sweep axis and signal differ in length");
    if (!(f_lo_hz < f_hi_hz))
        throw std::invalid_argument("fit window is empty");

    const size_t lo = std::lower_bound(f.begin(), f.end(), f_lo_hz) - f.begin();
    const size_t hi = std::upper_bound(f.begin(), f.end(), f_hi_hz) - f.begin();
    if (hi - lo < 5)
        throw std::invalid_argument("fit window needs at least five points");

    auto analyse = [&](size_t a, size_t b) {
        size_t pk = a;
        for (size_t k = a; k < b; ++k)
            if (db[k] > db[pk])
                pk = k;
        return pk;
    };
    const size_t pk = analyse(lo, hi);
    if (pk == lo || pk + 1 == hi)
        throw std::runtime_error("no resonance peak in fit window");
    double floor_db = db[lo];
    for (size_t k = lo; k < hi; ++k)
        floor_db = std::min(floor_db, db[k]);
    if (db[pk] - floor_db < 3.0)
        throw std::runtime_error("no resonance peak in fit window");

    // the window must hold exactly one feature: any second local maximum
    // within 6 dB of the top disqualifies it
    int peaks = 0;
    for (size_t k = lo + 1; k + 1 < hi; ++k)
        if (db[k] > db[k - 1] && db[k] >= db[k + 1] && db[k] >= db[pk] - 6.0)
            ++peaks;
    if (peaks > 1)
        throw std::runtime_error("fit window contains multiple peaks");

    // half-power crossings around the peak give the width seed and the
    // model-free cross-check Q
    const double half_db = db[pk] - 10.0 * std::log10(2.0);
    auto half_cross = [&](int dir) {
        size_t k = pk;
        while (true) {
            const size_t n = k + dir;
            if (n < lo || n >= hi || (dir < 0 && k == lo))
                throw std::runtime_error("no resonance peak in fit window");
            if (db[n] <= half_db) {
                const double d0 = db[k] - half_db;
                const double d1 = db[n] - half_db;
                return f[k] + (f[n] - f[k]) * d0 / (d0 - d1);
            }
            k = n;
        }
    };
    const double f_right = half_cross(+1);
    const double f_left = half_cross(-1);
    const double fwhm0 = f_right - f_left;

    // refine the window to +-20 linewidths and redo the peak search once
    const double w_lo = std::max(f_lo_hz, f[pk] - 20.0 * fwhm0);
    const double w_hi = std::min(f_hi_hz, f[pk] + 20.0 * fwhm0);
    const size_t a = std::lower_bound(f.begin(), f.end(), w_lo) - f.begin();
    const size_t b = std::upper_bound(f.begin(), f.end(), w_hi) - f.begin();
    const size_t pk2 = analyse(a, b);

    // Gauss-Newton on |S21|^2 in coordinates scaled by the width seed:
    // model a / (1 + 4 (u - b)^2 / W^2), u = (f - f_pk) / fwhm0
    std::vector<double> u(b - a), y(b - a);
    for (size_t k = a; k < b; ++k) {
        u[k - a] = (f[k] - f[pk2]) / fwhm0;
        y[k - a] = std::pow(10.0, db[k] / 10.0);
    }
    double pa = std::pow(10.0, db[pk2] / 10.0);
    double pb = 0.0;
    double pw = 1.0;

    auto sse = [&](double A, double B, double W) {
        double s = 0;
        for (size_t k = 0; k < u.size(); ++k) {
            const double t = 2.0 * (u[k] - B) / W;
            const double r = A / (1.0 + t * t) - y[k];
            s += r * r;
        }
        return s;
    };
    double best = sse(pa, pb, pw);
    for (int it = 0; it < 80; ++it) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (size_t k = 0; k < u.size(); ++k) {
            const double t = 2.0 * (u[k] - pb) / pw;
            const double L = 1.0 / (1.0 + t * t);
            const double r = pa * L - y[k];
            Eigen::Vector3d g(L, pa * L * L * 4.0 * t / pw,
                              pa * L * L * 2.0 * t * t / pw);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        Eigen::Vector3d step = jtj.ldlt().solve(-jtr);
        double scale = 1.0;
        double trial = best;
        for (int h = 0; h < 15; ++h) {
            const double na = pa + scale * step[0];
            const double nw = pw + scale * step[2];
            if (na > 0.0 && nw > 0.0) {
                trial = sse(na, pb + scale * step[1], nw);
                if (trial <= best)
                    break;
            }
            scale *= 0.5;
        }
        if (trial > best)
            break;
        pa += scale * step[0];
        pb += scale * step[1];
        pw += scale * step[2];
        const bool done = trial >= best * (1.0 - 1e-14) &&
                          scale * step.norm() < 1e-10;
        best = trial;
        if (done)
            break;
    }

    ResonanceFit out;
    out.f0_hz = f[pk2] + pb * fwhm0;
    out.loaded_q = out.f0_hz / (pw * fwhm0);
    out.insertion_loss_dB = -10.0 * std::log10(pa);
    out.q_3dB = 0.5 * (f_left + f_right) / fwhm0;
    return out;
}

double quarter_wave_design(double f_center_hz, double eff_permittivity) {
    if (!(f_center_hz > 0.0))
        throw std::invalid_argument("design frequency must be positive");
    if (!(eff_permittivity >= 1.0))
        throw std::invalid_argument(
            "effective permittivity must be at least 1");
    return c_m_s / (4.0 * f_center_hz * std::sqrt(eff_permittivity));
}

double calibrated_permittivity(double f_center_hz, double section_length_m) {
    if (!(f_center_hz > 0.0) || !(section_length_m > 0.0))
        throw std::invalid_argument(
            "calibration inputs must be positive");
    const double root = c_m_s / (4.0 * f_center_hz * section_length_m);
    return root * root;
}

} // namespace ednmr
