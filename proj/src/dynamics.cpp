#include "ednmr/dynamics.hpp"
#include "ednmr/constants.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace ednmr {

namespace {

constexpr double two_pi = 6.283185307179586476925;

struct RetainedElement {
    int a = 0, b = 0;                    // a > b in the level basis
    std::complex<double> coeff;          // includes the rotating-wave half
    double detuning_MHz = 0.0;
};

// Drive expressed in the level basis with far-off-resonant elements dropped.
struct ReducedDrive {
    std::vector<RetainedElement> rotating;
    RealVector static_diag;              // accumulated n = 0 diagonal, MHz
    double f_max_MHz = 0.0;              // fastest retained rate
};

ReducedDrive reduce_drive(const LevelSet& levels, const RotatingDrive& drive,
                          double window_MHz) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    ReducedDrive red;
    red.static_diag = RealVector::Zero(dim);

    std::vector<ComplexMatrix> in_basis;
    in_basis.reserve(drive.terms.size());
    double max_elem = 0.0;
    for (const DriveTerm& term : drive.terms) {
        if (term.op_MHz.rows() != dim || term.op_MHz.cols() != dim)
            throw std::invalid_argument("drive operator dimension mismatch");
        if (term.harmonic < 0)
            throw std::invalid_argument("harmonic index must be non-negative");
        if (term.harmonic > 0 && drive.carrier_Hz <= 0.0)
            throw std::invalid_argument("oscillating terms need a positive carrier");
        in_basis.push_back(levels.states.adjoint() * term.op_MHz * levels.states);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < a; ++b)
                max_elem = std::max(max_elem, std::abs(in_basis.back()(a, b)));
    }
    const double window = window_MHz > 0.0 ? window_MHz
                                           : std::max(20.0 * max_elem, 1e-3);

    for (size_t k = 0; k < drive.terms.size(); ++k) {
        const DriveTerm& term = drive.terms[k];
        const ComplexMatrix& w = in_basis[k];
        const double f_drive_MHz = term.harmonic * drive.carrier_Hz * 1e-6;
        if (term.harmonic == 0) {
            for (int a = 0; a < dim; ++a)
                red.static_diag[a] += w(a, a).real();
            for (int a = 0; a < dim; ++a)
                for (int b = 0; b < a; ++b) {
                    const double f_ab = levels.energies_MHz[a] - levels.energies_MHz[b];
                    if (f_ab > window || w(a, b) == 0.0)
                        continue;
                    red.rotating.push_back({a, b, w(a, b), f_ab});
                }
        } else {
            const std::complex<double> phase =
                std::exp(std::complex<double>(0.0, -term.phase_rad));
            for (int a = 0; a < dim; ++a)
                for (int b = 0; b < a; ++b) {
                    const double f_ab = levels.energies_MHz[a] - levels.energies_MHz[b];
                    const double delta = f_ab - f_drive_MHz;
                    if (std::abs(delta) > window || w(a, b) == 0.0)
                        continue;
                    red.rotating.push_back({a, b, 0.5 * w(a, b) * phase, delta});
                }
        }
    }

    red.f_max_MHz = 1e-9;
    for (int a = 0; a < dim; ++a)
        red.f_max_MHz = std::max(red.f_max_MHz, std::abs(red.static_diag[a]));
    for (const auto& e : red.rotating) {
        red.f_max_MHz = std::max(red.f_max_MHz, std::abs(e.detuning_MHz));
        red.f_max_MHz = std::max(red.f_max_MHz, std::abs(e.coeff));
    }
    return red;
}

// One pass of piecewise-constant propagation in the interaction frame.
// `rho` is in the level basis and is updated in place; states are emitted at
// the requested times through `emit`.
void propagate(const ReducedDrive& red, ComplexMatrix& rho, double t0_us,
               const std::vector<double>& times_us, double step_us,
               const std::function<void(size_t, const ComplexMatrix&)>& emit) {
    const int dim = static_cast<int>(rho.rows());
    ComplexMatrix h(dim, dim);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver;
    double t = t0_us;
    for (size_t idx = 0; idx < times_us.size(); ++idx) {
        const double t_end = t0_us + times_us[idx];
        const double seg = t_end - t;
        if (seg < -1e-12)
            throw std::invalid_argument("checkpoint times must ascend");
        const int nsteps = seg > 0.0 ? static_cast<int>(std::ceil(seg / step_us - 1e-9))
                                     : 0;
        const double dt = nsteps > 0 ? seg / nsteps : 0.0;
        for (int s = 0; s < nsteps; ++s) {
            const double t_mid = t + (s + 0.5) * dt;
            h.setZero();
            for (int a = 0; a < dim; ++a)
                h(a, a) = red.static_diag[a];
            for (const auto& e : red.rotating) {
                const std::complex<double> z =
                    e.coeff * std::exp(std::complex<double>(
                                  0.0, two_pi * e.detuning_MHz * t_mid));
                h(e.a, e.b) += z;
                h(e.b, e.a) += std::conj(z);
            }
            solver.compute(h);
            ComplexMatrix u = solver.eigenvectors();
            Eigen::VectorXcd ph(dim);
            for (int k = 0; k < dim; ++k)
                ph[k] = std::exp(std::complex<double>(
                    0.0, -two_pi * solver.eigenvalues()[k] * dt));
            ComplexMatrix prop = u * ph.asDiagonal() * u.adjoint();
            rho = prop * rho * prop.adjoint();
        }
        t = t_end;
        emit(idx, rho);
    }
}

std::vector<DensityState> run_evolution(const LevelSet& levels,
                                        const RotatingDrive& drive,
                                        const DensityState& state,
                                        const std::vector<double>& times_s,
                                        const EvolveOptions& opt) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    if (state.rho.rows() != dim || state.rho.cols() != dim)
        throw std::invalid_argument("state dimension mismatch");
    for (size_t k = 0; k < times_s.size(); ++k)
        if (times_s[k] < 0.0 || (k > 0 && times_s[k] < times_s[k - 1]))
            throw std::invalid_argument("checkpoint times must ascend from zero");

    const ReducedDrive red = reduce_drive(levels, drive, opt.window_MHz);
    const double max_step_us = 1.0 / (20.0 * red.f_max_MHz);
    const double t0_us = opt.start_time_s * 1e6;

    std::vector<double> times_us(times_s.size());
    for (size_t k = 0; k < times_s.size(); ++k)
        times_us[k] = times_s[k] * 1e6;

    // initial state enters the interaction frame at the sequence clock time
    Eigen::VectorXcd wind(dim);
    for (int i = 0; i < dim; ++i)
        wind[i] = std::exp(std::complex<double>(
            0.0, two_pi * levels.energies_MHz[i] * t0_us));
    const ComplexMatrix rho0 =
        wind.asDiagonal() *
        (levels.states.adjoint() * state.rho * levels.states).eval() *
        wind.conjugate().asDiagonal();

    auto run_at = [&](double step_us) {
        std::vector<ComplexMatrix> out(times_us.size());
        ComplexMatrix rho = rho0;
        propagate(red, rho, t0_us, times_us, step_us,
                  [&](size_t idx, const ComplexMatrix& r) { out[idx] = r; });
        return out;
    };

    std::vector<ComplexMatrix> frames;
    if (opt.step_s > 0.0) {
        const double step_us = opt.step_s * 1e6;
        if (step_us > max_step_us * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "integration step too coarse: maximum allowed is "
                << max_step_us * 1e-6 << " s for the retained drive elements";
            throw std::invalid_argument(msg.str());
        }
        frames = run_at(step_us);
    } else {
        double step_us = max_step_us;
        frames = run_at(step_us);
        for (int round = 0; round < 8; ++round) {
            step_us *= 0.5;
            auto finer = run_at(step_us);
            double worst = 0.0;
            for (size_t k = 0; k < frames.size(); ++k)
                worst = std::max(worst,
                                 (finer[k] - frames[k]).cwiseAbs().maxCoeff());
            frames.swap(finer);
            if (worst < 1e-3)
                break;
            if (round == 7)
                throw std::runtime_error("step refinement failed to converge");
        }
    }

    // unwind the interaction frame and return to the lab basis
    std::vector<DensityState> out(frames.size());
    for (size_t k = 0; k < frames.size(); ++k) {
        const double t_abs_us = t0_us + times_us[k];
        Eigen::VectorXcd ph(dim);
        for (int i = 0; i < dim; ++i)
            ph[i] = std::exp(std::complex<double>(
                0.0, -two_pi * levels.energies_MHz[i] * t_abs_us));
        ComplexMatrix sch =
            ph.asDiagonal() * frames[k] * ph.conjugate().asDiagonal();
        out[k].rho = levels.states * sch * levels.states.adjoint();
        const double tr = out[k].rho.trace().real();
        if (std::abs(tr - 1.0) > 1e-8)
            throw std::runtime_error("propagation lost normalization");
    }
    return out;
}

std::pair<int, int> find_esr_pair(const LevelSet& levels, double probed_mi) {
    int lo = -1, hi = -1;
    for (size_t k = 0; k < levels.labels.size(); ++k) {
        if (std::abs(levels.labels[k].second - probed_mi) > 0.25)
            continue;
        if (std::abs(levels.labels[k].first + 0.5) < 0.25)
            lo = static_cast<int>(k);
        if (std::abs(levels.labels[k].first - 0.5) < 0.25)
            hi = static_cast<int>(k);
    }
    if (lo < 0 || hi < 0)
        throw std::invalid_argument("probed electron line not present at this field");
    if (lo > hi)
        std::swap(lo, hi);
    return {lo, hi};
}

RotatingDrive make_rf_drive(const SpinSystem& sys, const StaticField& field,
                            const DriveSpec& spec, double carrier_Hz,
                            double amplitude) {
    if (spec.channel == DriveSpec::Channel::MagneticB2) {
        if (spec.b_direction.norm() == 0.0)
            throw std::invalid_argument("magnetic drive direction must be nonzero");
        return magnetic_drive(sys, amplitude * spec.b_direction.normalized(),
                              carrier_Hz);
    }
    return rotating_drive(
        harmonic_components(spec.model, sys, field, amplitude, carrier_Hz));
}

} // namespace

RotatingDrive rotating_drive(const HarmonicDrive& drive) {
    RotatingDrive out;
    out.carrier_Hz = drive.carrier_Hz;
    for (const auto& [n, op] : drive.components_MHz) {
        DriveTerm term;
        term.harmonic = n;
        term.phase_rad = n == 1 ? -M_PI_2 : 0.0;   // sin = cos shifted
        term.op_MHz = op;
        out.terms.push_back(std::move(term));
    }
    return out;
}

RotatingDrive magnetic_drive(const SpinSystem& sys, const Vector3& b_tesla,
                             double carrier_Hz) {
    RotatingDrive out;
    out.carrier_Hz = carrier_Hz;
    DriveTerm term;
    term.harmonic = 1;
    term.phase_rad = 0.0;
    term.op_MHz = zeeman_drive_operator(sys, b_tesla);
    out.terms.push_back(std::move(term));
    return out;
}

DensityState evolve(const LevelSet& levels, const RotatingDrive& drive,
                    const DensityState& state, double duration_s,
                    const EvolveOptions& opt) {
    if (duration_s < 0.0)
        throw std::invalid_argument("duration must be non-negative");
    auto frames = run_evolution(levels, drive, state, {duration_s}, opt);
    return frames.front();
}

std::vector<DensityState> evolve_trace(const LevelSet& levels,
                                       const RotatingDrive& drive,
                                       const DensityState& state,
                                       const std::vector<double>& times_s,
                                       const EvolveOptions& opt) {
    return run_evolution(levels, drive, state, times_s, opt);
}

DensityState thermal_state(const ComplexMatrix& h_MHz, double temperature_K) {
    if (temperature_K <= 0.0)
        throw std::invalid_argument("temperature must be positive");
    if ((h_MHz - h_MHz.adjoint()).norm() > 1e-9 * (1.0 + h_MHz.norm()))
        throw std::invalid_argument("hamiltonian must be Hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h_MHz);
    const RealVector& e = solver.eigenvalues();
    const double scale = PhysicalConstants::planck_J_s * 1e6 /
                         (PhysicalConstants::boltzmann_J_K * temperature_K);
    RealVector w(e.size());
    for (int k = 0; k < e.size(); ++k)
        w[k] = std::exp(-(e[k] - e.minCoeff()) * scale);
    w /= w.sum();
    DensityState out;
    out.rho = solver.eigenvectors() * w.asDiagonal() *
              solver.eigenvectors().adjoint();
    return out;
}

ComplexMatrix selective_pulse(const LevelSet& levels, int lower, int upper,
                              double angle_rad, double phase_rad) {
    const int dim = static_cast<int>(levels.energies_MHz.size());
    if (lower < 0 || upper < 0 || lower >= dim || upper >= dim)
        throw std::invalid_argument("pair index out of range");
    if (lower == upper)
        throw std::invalid_argument("pair must name two distinct levels");
    ComplexMatrix u_basis = ComplexMatrix::Identity(dim, dim);
    const double c = std::cos(0.5 * angle_rad);
    const double s = std::sin(0.5 * angle_rad);
    const std::complex<double> iu(0.0, 1.0);
    u_basis(lower, lower) = c;
    u_basis(upper, upper) = c;
    u_basis(lower, upper) = -iu * s * std::exp(-iu * phase_rad);
    u_basis(upper, lower) = -iu * s * std::exp(iu * phase_rad);
    return levels.states * u_basis * levels.states.adjoint();
}

double level_population(const LevelSet& levels, const DensityState& state, int k) {
    if (k < 0 || k >= levels.energies_MHz.size())
        throw std::invalid_argument("level index out of range");
    return (levels.states.col(k).adjoint() * state.rho * levels.states.col(k))(0, 0)
        .real();
}

double population_difference(const LevelSet& levels, const DensityState& state,
                             int lower, int upper) {
    return level_population(levels, state, lower) -
           level_population(levels, state, upper);
}

DaviesPoint davies_endor_point(const SpinSystem& sys, const StaticField& field,
                               const DriveSpec& drive, double rf_frequency_Hz,
                               double rf_duration_s, double rf_amplitude,
                               double probed_mi, const SequenceSettings& settings) {
    const ComplexMatrix h = build_hamiltonian(sys, field);
    const LevelSet levels = eigensystem(sys, h);
    const auto [lo, hi] = find_esr_pair(levels, probed_mi);

    DaviesPoint pt;
    const DensityState rho_th = thermal_state(h, settings.temperature_K);
    pt.d_thermal = population_difference(levels, rho_th, lo, hi);

    const ComplexMatrix inv =
        selective_pulse(levels, lo, hi, settings.inversion_angle_rad);
    DensityState rho_inv;
    rho_inv.rho = inv * rho_th.rho * inv.adjoint();
    pt.d_inverted = population_difference(levels, rho_inv, lo, hi);

    const RotatingDrive rf =
        make_rf_drive(sys, field, drive, rf_frequency_Hz, rf_amplitude);
    EvolveOptions opt;
    opt.step_s = settings.step_s;
    opt.window_MHz = settings.window_MHz;
    const DensityState rho_rf = evolve(levels, rf, rho_inv, rf_duration_s, opt);
    pt.d_rf = population_difference(levels, rho_rf, lo, hi);
    return pt;
}

SpectrumResult davies_endor_spectrum(const SpinSystem& sys, const StaticField& field,
                                     const DriveSpec& drive,
                                     const std::vector<double>& rf_grid_Hz,
                                     double rf_duration_s, double rf_amplitude,
                                     double probed_mi,
                                     const SequenceSettings& settings) {
    if (rf_grid_Hz.empty())
        throw std::invalid_argument("RF grid must not be empty");
    SpectrumResult out;
    out.axis_label = "rf_frequency_hz";
    out.signal_label = "endor_contrast";
    out.axis = rf_grid_Hz;
    out.signal.resize(rf_grid_Hz.size());
    for (size_t k = 0; k < rf_grid_Hz.size(); ++k) {
        const DaviesPoint pt =
            davies_endor_point(sys, field, drive, rf_grid_Hz[k], rf_duration_s,
                               rf_amplitude, probed_mi, settings);
        const double denom = pt.d_thermal - pt.d_inverted;
        if (std::abs(denom) < 1e-15)
            throw std::runtime_error("probe inversion produced no contrast");
        out.signal[k] = (pt.d_rf - pt.d_inverted) / denom;
    }
    out.metadata.emplace_back("species", sys.label);
    out.metadata.emplace_back("b0_T", std::to_string(field.b_tesla.norm()));
    out.metadata.emplace_back(
        "channel", drive.channel == DriveSpec::Channel::MagneticB2 ? "magnetic"
                                                                   : "electric");
    out.metadata.emplace_back("rf_amplitude", std::to_string(rf_amplitude));
    out.metadata.emplace_back("rf_duration_s", std::to_string(rf_duration_s));
    out.metadata.emplace_back("probed_mi", std::to_string(probed_mi));
    return out;
}

Map2D rabi_map(const SpinSystem& sys, const StaticField& field,
               const DriveSpec& drive, double carrier_Hz,
               const std::vector<double>& durations_s,
               const std::vector<double>& amplitudes,
               const SequenceSettings& settings) {
    if (durations_s.empty() || amplitudes.empty())
        throw std::invalid_argument("duration and amplitude grids must not be empty");

    const ComplexMatrix h = build_hamiltonian(sys, field);
    const LevelSet levels = eigensystem(sys, h);

    // locate the nuclear transition the carrier addresses, at any available
    // harmonic of the drive
    const auto table = transition_table(levels, sys, ProbeAxis::NuclearX);
    int best_lo = -1, best_hi = -1;
    double best_det = 1.0;   // MHz acceptance for "on a resonance"
    for (const Transition& t : table) {
        if (t.kind != TransitionClass::NuclearSQT &&
            t.kind != TransitionClass::NuclearDQT)
            continue;
        for (int n = 1; n <= 2; ++n) {
            const double det = std::abs(n * carrier_Hz * 1e-6 - t.frequency_MHz);
            if (det < best_det) {
                best_det = det;
                best_lo = t.lower;
                best_hi = t.upper;
            }
        }
    }
    if (best_lo < 0)
        throw std::invalid_argument(
            "carrier does not sit on a nuclear resonance (fundamental or subharmonic)");

    double probed_mi = levels.labels[best_lo].second;
    int lo = 0, hi = 0;
    try {
        std::tie(lo, hi) = find_esr_pair(levels, probed_mi);
    } catch (const std::invalid_argument&) {
        probed_mi = levels.labels[best_hi].second;
        std::tie(lo, hi) = find_esr_pair(levels, probed_mi);
    }

    const DensityState rho_th = thermal_state(h, settings.temperature_K);
    const double d_th = population_difference(levels, rho_th, lo, hi);
    const ComplexMatrix inv =
        selective_pulse(levels, lo, hi, settings.inversion_angle_rad);
    DensityState rho_inv;
    rho_inv.rho = inv * rho_th.rho * inv.adjoint();
    const double d_inv = population_difference(levels, rho_inv, lo, hi);
    const double denom = d_th - d_inv;
    if (std::abs(denom) < 1e-15)
        throw std::runtime_error("probe inversion produced no contrast");

    Map2D out;
    out.durations_s = durations_s;
    out.amplitudes = amplitudes;
    out.signal.assign(durations_s.size(),
                      std::vector<double>(amplitudes.size(), 0.0));
    EvolveOptions opt;
    opt.step_s = settings.step_s;
    opt.window_MHz = settings.window_MHz;
    for (size_t col = 0; col < amplitudes.size(); ++col) {
        if (amplitudes[col] == 0.0) {
            for (size_t row = 0; row < durations_s.size(); ++row)
                out.signal[row][col] = 0.0;
            continue;
        }
        const RotatingDrive rf =
            make_rf_drive(sys, field, drive, carrier_Hz, amplitudes[col]);
        const auto frames = evolve_trace(levels, rf, rho_inv, durations_s, opt);
        for (size_t row = 0; row < durations_s.size(); ++row) {
            const double d_rf = population_difference(levels, frames[row], lo, hi);
            out.signal[row][col] = (d_rf - d_inv) / denom;
        }
    }
    out.metadata.emplace_back("species", sys.label);
    out.metadata.emplace_back("b0_T", std::to_string(field.b_tesla.norm()));
    out.metadata.emplace_back("carrier_hz", std::to_string(carrier_Hz));
    out.metadata.emplace_back(
        "channel", drive.channel == DriveSpec::Channel::MagneticB2 ? "magnetic"
                                                                   : "electric");
    out.metadata.emplace_back("probed_mi", std::to_string(probed_mi));
    return out;
}

std::vector<double> hahn_echo_power_sweep(const SpinSystem& sys,
                                          const StaticField& field,
                                          const std::vector<double>& b1_scales,
                                          const EchoTemplate& pulses,
                                          int phase_samples) {
    if (pulses.t_half_pi_s <= 0.0 || pulses.t_pi_s <= 0.0)
        throw std::invalid_argument("pulse durations must be positive");
    if (phase_samples < 8)
        throw std::invalid_argument("phase average needs at least 8 samples");
    // the calibration line must exist: require an allowed electron transition
    const LevelSet levels = eigensystem(sys, build_hamiltonian(sys, field));
    const auto table = transition_table(levels, sys, ProbeAxis::ElectronX);
    const bool has_esr =
        std::any_of(table.begin(), table.end(), [](const Transition& t) {
            return t.kind == TransitionClass::ESR && t.weight > 1e-6;
        });
    if (!has_esr)
        throw std::invalid_argument("no electron transition to calibrate on");

    const double angle_ratio = pulses.t_pi_s / pulses.t_half_pi_s;
    std::vector<double> out;
    out.reserve(b1_scales.size());
    using M2 = Eigen::Matrix2cd;
    const std::complex<double> iu(0.0, 1.0);
    for (const double s : b1_scales) {
        const double th1 = s * M_PI_2;
        const double th2 = th1 * angle_ratio;
        M2 rx1, rx2;
        rx1 << std::cos(0.5 * th1), -iu * std::sin(0.5 * th1),
               -iu * std::sin(0.5 * th1), std::cos(0.5 * th1);
        rx2 << std::cos(0.5 * th2), -iu * std::sin(0.5 * th2),
               -iu * std::sin(0.5 * th2), std::cos(0.5 * th2);
        std::complex<double> mean = 0.0;
        for (int k = 0; k < phase_samples; ++k) {
            const double phi = two_pi * k / phase_samples;
            M2 rz;
            rz << std::exp(-iu * (0.5 * phi)), 0.0, 0.0, std::exp(iu * (0.5 * phi));
            const M2 u = rz * rx2 * rz * rx1;
            // start in the lower level; echo lives in the final coherence
            mean += u(0, 0) * std::conj(u(1, 0));
        }
        mean /= static_cast<double>(phase_samples);
        out.push_back(-2.0 * mean.imag());
    }
    return out;
}

DensityState run_sequence(const SpinSystem& sys, const StaticField& field,
                          const LevelSet& levels, const PulseSequence& seq,
                          const DriveSpec& rf_drive, const DensityState& initial,
                          const SequenceSettings& settings) {
    if (seq.elements.empty())
        throw std::invalid_argument("pulse sequence must not be empty");
    const auto [lo, hi] = find_esr_pair(levels, seq.readout.probed_mi);

    DensityState state = initial;
    double clock_s = 0.0;
    for (const auto& element : seq.elements) {
        if (std::holds_alternative<Delay>(element)) {
            clock_s += std::get<Delay>(element).duration_s;
            continue;
        }
        const Pulse& p = std::get<Pulse>(element);
        if (p.duration_s <= 0.0)
            throw std::invalid_argument("pulse duration must be positive");
        if (p.amplitude < 0.0)
            throw std::invalid_argument("pulse amplitude must be non-negative");
        if (p.channel == PulseChannel::MicrowaveB1) {
            // ideal selective rotation on the probed electron pair
            const ComplexMatrix op =
                zeeman_drive_operator(sys, Vector3(p.amplitude, 0.0, 0.0));
            const double rate_MHz = std::abs(
                (levels.states.col(hi).adjoint() * op * levels.states.col(lo))(0, 0));
            const double angle = two_pi * rate_MHz * p.duration_s * 1e6;
            const ComplexMatrix u =
                selective_pulse(levels, lo, hi, angle, p.phase_rad);
            state.rho = u * state.rho * u.adjoint();
        } else {
            DriveSpec spec = rf_drive;
            spec.channel = p.channel == PulseChannel::RfB2
                               ? DriveSpec::Channel::MagneticB2
                               : DriveSpec::Channel::ElectricE2;
            const RotatingDrive rf =
                make_rf_drive(sys, field, spec, p.carrier_Hz, p.amplitude);
            EvolveOptions opt;
            opt.step_s = settings.step_s;
            opt.window_MHz = settings.window_MHz;
            opt.start_time_s = clock_s;
            state = evolve(levels, rf, state, p.duration_s, opt);
        }
        clock_s += p.duration_s;
    }
    return state;
}

} // namespace ednmr
