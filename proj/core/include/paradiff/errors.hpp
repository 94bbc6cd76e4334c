#pragma once

#include <stdexcept>
#include <string>

namespace paradiff {

// Out-of-range argument for a mathematical operation (timestep, class id, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Shapes or configurations that do not fit together.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid or unknown configuration keys.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A pipeline stage was run before the stage that produces its inputs.
class DependencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training stopped on a non-finite or divergent loss.
class TrainingAborted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace paradiff
