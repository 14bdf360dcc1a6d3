#ifndef VISCOCLAMP_ERRORS_HPP
#define VISCOCLAMP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace viscoclamp {

// Input violates a documented precondition.
using InvalidArgument = std::invalid_argument;

// Input is structurally valid but degenerate (constant series, zero mean, ...).
struct DegenerateInput : std::invalid_argument {
    explicit DegenerateInput(const std::string& what) : std::invalid_argument(what) {}
};

// A simulation produced non-finite values or left the model's validity region.
struct NumericFailure : std::runtime_error {
    double time_s;
    explicit NumericFailure(const std::string& what, double t = 0.0)
        : std::runtime_error(what + " (t = " + std::to_string(t) + " s)"), time_s(t) {}
};

// An estimator could not produce a usable model.
struct EstimationFailure : std::runtime_error {
    explicit EstimationFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace viscoclamp

#endif
