// Copyright 2026 The ef21muon Authors. All Rights Reserved.
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
// =============================================================================

#ifndef EF21MUON_ERROR_H_
#define EF21MUON_ERROR_H_

#include <stdexcept>
#include <string>

namespace ef21 {

// Base of every error thrown by the library. The CLI maps ConfigError to
// exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define EF21_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(what) {}       \
  }

EF21_DEFINE_ERROR(NonFiniteError);
EF21_DEFINE_ERROR(ShapeError);
EF21_DEFINE_ERROR(ConvergenceError);
EF21_DEFINE_ERROR(UnsupportedNormError);
EF21_DEFINE_ERROR(ZeroInputError);
EF21_DEFINE_ERROR(MalformedPayloadError);
EF21_DEFINE_ERROR(NoFormulaError);
EF21_DEFINE_ERROR(MissingConstantError);
EF21_DEFINE_ERROR(MissingWorkerError);
EF21_DEFINE_ERROR(UnknownFStarError);
EF21_DEFINE_ERROR(DegenerateTrajectoryError);
EF21_DEFINE_ERROR(InsufficientDataError);
EF21_DEFINE_ERROR(UnknownAxisError);
EF21_DEFINE_ERROR(ConfigError);

#undef EF21_DEFINE_ERROR

}  // namespace ef21

#endif  // EF21MUON_ERROR_H_
