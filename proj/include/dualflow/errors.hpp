// Copyright (c) 2026 The DualFlow Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dualflow {

// Precondition / configuration violations. The CLI maps these to exit code 2,
// any other std::exception to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& message) {
    if (!cond) throw ValidationError(message);
}

}  // namespace dualflow
