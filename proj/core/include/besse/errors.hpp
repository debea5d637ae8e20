#pragma once

#include <stdexcept>
#include <string>

namespace besse {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// invalid_input -> 2, invariant/contract failures -> 1, numerical -> 3.

struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct precondition_violation : std::logic_error {
    using std::logic_error::logic_error;
};

// An internal consistency check failed; signals a defect upstream, not bad input.
struct contract_violation : std::logic_error {
    using std::logic_error::logic_error;
};

// An instance-level contradiction with a structural fact the theory guarantees
// (e.g. an unpaired index transition). Strongest failure mode.
struct model_violation : std::logic_error {
    using std::logic_error::logic_error;
};

struct numerical_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace besse
