#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sf {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes that do not fit an operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Violated precondition on arguments that are otherwise well-formed.
class ContractError : public Error {
public:
    using Error::Error;
};

// Missing or malformed entries in a weight store.
class LoadError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    IoError(std::string path, const std::string& reason)
        : Error(path + ": " + reason), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Coincident eye centres, collinear point sets and the like.
class GeometryError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, std::vector<std::pair<std::size_t, double>> trace)
        : Error("loss became non-finite at iteration " + std::to_string(iteration)),
          iteration_(iteration), trace_(std::move(trace)) {}

    std::size_t iteration() const noexcept { return iteration_; }
    const std::vector<std::pair<std::size_t, double>>& trace() const noexcept { return trace_; }

private:
    std::size_t iteration_;
    std::vector<std::pair<std::size_t, double>> trace_;
};

// Failure inside one stage of a transfer job.
class StageError : public Error {
public:
    StageError(std::string stage, std::string job, const std::string& what)
        : Error("[" + job + "] stage '" + stage + "': " + what),
          stage_(std::move(stage)), job_(std::move(job)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& job() const noexcept { return job_; }

private:
    std::string stage_;
    std::string job_;
};

}  // namespace sf
