/*
 * Copyright (c) 2026, The aerotx Authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace aerotx {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the function (e.g. x̄ outside [0,1]).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or invalid configuration (divisibility, head counts, ranges).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Geometry could not be constructed (self-intersecting airfoil, negative chord).
class ConstructionError : public Error {
public:
    using Error::Error;
};

/// Malformed file or payload. `offset` is the byte position where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit FormatError(const std::string& what) : Error(what) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_ = 0;
};

}  // namespace aerotx
