#ifndef EDNMR_RESULTS_HPP
#define EDNMR_RESULTS_HPP

#include <string>
#include <utility>
#include <vector>

namespace ednmr {

// One-dimensional scan with ordered metadata for the CSV header.
// `extra` is an optional second signal column (same length as axis when
// present, e.g. transmission phase next to magnitude).
struct SpectrumResult {
    std::string axis_label = "axis";
    std::string signal_label = "signal";
    std::string extra_label;
    std::vector<double> axis;
    std::vector<double> signal;
    std::vector<double> extra;
    std::vector<std::pair<std::string, std::string>> metadata;
};

// Two-dimensional map: rows follow the duration axis, columns the amplitudes.
struct Map2D {
    std::vector<double> durations_s;
    std::vector<double> amplitudes;
    std::vector<std::vector<double>> signal;   // [duration][amplitude]
    std::vector<std::pair<std::string, std::string>> metadata;
};

} // namespace ednmr

#endif
