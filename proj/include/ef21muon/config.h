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

#ifndef EF21MUON_CONFIG_H_
#define EF21MUON_CONFIG_H_

#include <string>
#include <vector>

#include "ef21muon/harness.h"

namespace ef21 {

// One documented "section.key" of the INI config.
struct ConfigKey {
  std::string key;
  std::string doc;
};

// Every key, in canonical order.
const std::vector<ConfigKey>& ConfigKeys();
bool IsConfigKey(const std::string& key);

// Sets one key from its text form. Throws ConfigError naming the key for
// unknown keys and malformed values.
void ApplySetting(RunConfig& config, const std::string& key,
                  const std::string& value);
// Canonical text form of one key.
std::string GetSetting(const RunConfig& config, const std::string& key);

// INI with sections [model], [objective], [optimizer], [compressors],
// [harness] and [output]; '#' and ';' start comments. Lists are comma
// separated. Unknown sections or keys are errors.
RunConfig ParseConfig(const std::string& text);
RunConfig LoadConfig(const std::string& path);

// Every key with its current value; ParseConfig(CanonicalConfig(c)) echoes
// back to the same text.
std::string CanonicalConfig(const RunConfig& config);

// "4x3,3x3" with an optional repeat suffix: "768x768*4".
std::vector<Shape> ParseShapes(const std::string& text);

}  // namespace ef21

#endif  // EF21MUON_CONFIG_H_
