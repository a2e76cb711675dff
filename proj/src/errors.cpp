// Copyright 2026 The halfwalk Authors
// SPDX-License-Identifier: Apache-2.0
#include "halfwalk/errors.hpp"

namespace halfwalk {

void fail_domain(const std::string& what) { throw DomainError(what); }

}  // namespace halfwalk
