#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace fosl {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;

/// Base of every error the library raises. `stage()` names the pipeline
/// stage (or module) that failed so the CLI can surface it verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Non-finite or diverging trajectories.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Singular or ill-conditioned matrices that survived regularization.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// H_k G_k lost column rank: the unknown input cannot be seen by the
/// measurements. Distinct from NumericalError on purpose.
class UnobservableInputError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& file, long line, const std::string& what)
        : Error("parse", file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
          file_(file), line_(line) {}

    long line() const noexcept { return line_; }
    const std::string& file() const noexcept { return file_; }

private:
    std::string file_;
    long line_;
};

/// Rotates a network-frame phasor into the machine d/q frame of a rotor at
/// angle `delta`: (d + jq) = F * exp(-j(delta - pi/2)).
inline Complex to_machine_frame(Complex network, double delta) {
    return network * std::polar(1.0, -(delta - kPi / 2.0));
}

inline Complex to_network_frame(Complex dq, double delta) {
    return dq * std::polar(1.0, delta - kPi / 2.0);
}

}  // namespace fosl
