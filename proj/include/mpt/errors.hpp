#pragma once

#include <stdexcept>
#include <string>

namespace mpt {

// Error taxonomy. The CLI maps these onto exit codes, everything else just
// propagates them.

struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct query_error : std::runtime_error {
    explicit query_error(const std::string& msg) : std::runtime_error("query error: " + msg) {}
};

struct capacity_error : std::runtime_error {
    explicit capacity_error(const std::string& msg) : std::runtime_error("capacity error: " + msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct generation_error : std::runtime_error {
    explicit generation_error(const std::string& msg) : std::runtime_error("generation error: " + msg) {}
};

struct sampling_error : std::runtime_error {
    explicit sampling_error(const std::string& msg) : std::runtime_error("sampling error: " + msg) {}
};

struct labeling_error : std::runtime_error {
    explicit labeling_error(const std::string& msg) : std::runtime_error("labeling error: " + msg) {}
};

struct plan_input_error : std::runtime_error {
    explicit plan_input_error(const std::string& msg) : std::runtime_error("plan input error: " + msg) {}
};

struct training_error : std::runtime_error {
    explicit training_error(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

} // namespace mpt
