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

#include <string_view>

#include "json.hpp"
#include "stubmatch/call_graph.hpp"

namespace stubmatch::detail {

nlohmann::ordered_json graph_to_json(const CallGraph& g);
CallGraph graph_from_json(const nlohmann::ordered_json& doc);

/// Parses JSON text, rethrowing syntax errors as ParseError with line/column.
nlohmann::ordered_json parse_json_text(std::string_view document);

}  // namespace stubmatch::detail
