#pragma once

#include <span>
#include <string>
#include <vector>

namespace earlyrec {

/// A named parameter tensor viewed as flat storage.
/// `decay` marks weight matrices (weight decay applies); biases have it false.
struct ParamView {
    std::string name;
    std::span<double> values;
    bool decay = false;
};

using ParamList = std::vector<ParamView>;

} // namespace earlyrec
