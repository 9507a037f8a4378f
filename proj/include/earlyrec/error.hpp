#pragma once

#include <stdexcept>
#include <string>

namespace earlyrec {

/// Input violates an operation's precondition (bad dimensions, out-of-range index, ...).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A file could not be parsed. The message names the line or record.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file parsed but its contents disagree with its own header.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training or evaluation produced non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace earlyrec
