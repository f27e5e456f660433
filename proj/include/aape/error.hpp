#pragma once

#include <stdexcept>
#include <string>

namespace aape {

// Raised for contract violations: malformed files, shape mismatches,
// degenerate selections. Messages start with a stable lowercase tag
// ("bad magic", "label count mismatch", ...) so callers can match on them.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace aape
