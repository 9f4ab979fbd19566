// Copyright 2026 The lddscan Authors.
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

namespace lddscan {

enum class errc {
  usage,          // caller violated a precondition
  data,           // malformed or unreadable input
  empty_lag,      // no symbol pairs exist at the requested lag
  too_few_points, // not enough usable curve points for a fit
  non_decaying,   // fitted law does not decay with distance
};

inline const char* to_string(errc code) {
  switch (code) {
    case errc::usage: return "usage";
    case errc::data: return "data";
    case errc::empty_lag: return "empty_lag";
    case errc::too_few_points: return "too_few_points";
    case errc::non_decaying: return "non_decaying";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace lddscan
