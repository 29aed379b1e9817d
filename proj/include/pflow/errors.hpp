#pragma once

#include <stdexcept>
#include <string>

namespace pflow {

// Base class for every error raised by the library. error_class() is the
// machine-readable tag the CLI prints and maps onto its exit code.
class Error : public std::runtime_error {
public:
    Error(std::string error_class, const std::string& what)
        : std::runtime_error(what), class_(std::move(error_class)) {}

    const std::string& error_class() const noexcept { return class_; }

private:
    std::string class_;
};

struct ContractViolation : Error {
    explicit ContractViolation(const std::string& what) : Error("contract-violation", what) {}
};

struct NumericalFailure : Error {
    explicit NumericalFailure(const std::string& what) : Error("numerical-failure", what) {}
};

struct SingularMatrix : Error {
    explicit SingularMatrix(const std::string& what) : Error("singular-matrix", what) {}
};

struct CapabilityError : Error {
    explicit CapabilityError(const std::string& what) : Error("capability", what) {}
};

struct ConfigurationError : Error {
    explicit ConfigurationError(const std::string& what) : Error("configuration", what) {}
};

struct TrainingDiverged : Error {
    TrainingDiverged(int epoch, const std::string& what)
        : Error("training-diverged", what), epoch(epoch) {}
    int epoch;
};

struct IntegrationFailure : Error {
    IntegrationFailure(int step, const std::string& what)
        : Error("integration-failure", what), step(step) {}
    int step;
};

struct SolverDiverged : Error {
    SolverDiverged(int iteration, const std::string& what)
        : Error("solver-diverged", what), iteration(iteration) {}
    int iteration;
};

struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& what) : Error("degenerate-input", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io", what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractViolation(what);
}

}  // namespace pflow
