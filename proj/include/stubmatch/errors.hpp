// Copyright 2026 The stubmatch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace stubmatch {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed interchange text. The message carries line and field context.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A structurally well-formed document or object that violates a type invariant.
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// Non-finite values inside the network or the optimizer.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Stored bytes do not match their content address or embedded hash.
class CorruptionError : public Error {
public:
    using Error::Error;
};

/// On-disk format version is not the one this build understands.
class VersionError : public Error {
public:
    using Error::Error;
};

/// A precondition on the inputs of an operation does not hold.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace stubmatch
