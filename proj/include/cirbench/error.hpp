/*
 * Copyright 2026 The cirbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CIRBENCH_ERROR_HPP_
#define CIRBENCH_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace cirbench {

/// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed bytes: bad magic, truncated header, unparsable JSON.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two parts of an input disagree (id count vs row count, rank vs member).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input carrying invalid values (non-finite, unknown id, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Loss or gradient became non-finite during optimisation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace cirbench

#endif  // CIRBENCH_ERROR_HPP_
