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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stubmatch/call_graph.hpp"

namespace stubmatch::synth {

struct Perturbation {
    double node_add_prob = 0.0;        // chance of one extra stub function per sample
    double feature_noise_scale = 0.0;  // sigma of multiplicative log-normal noise on magnitude features
    double edge_flip_prob = 0.0;       // chance each template edge is reversed

    bool operator==(const Perturbation&) const = default;
};

/// A synthetic packer: a stub skeleton plus the noise applied per sample.
struct FamilySpec {
    std::string packer_name;
    CallGraph stub_template;
    Perturbation perturbation;
    /// Isolated internal functions appended to each sample as unrelated
    /// program code; stub extraction drops them.
    std::size_t payload_nodes = 0;
    std::uint64_t seed = 0;
};

/// Throws InvalidArgument for n == 0 or probabilities outside [0, 1].
std::vector<CallGraph> generate_family(const FamilySpec& spec, std::size_t n);

/// `count` families with distinct feature magnitudes, cycling through the
/// three stub shapes (entry with callees, isolated entry next to a stub
/// component, and entry plus imports without edges).
std::vector<FamilySpec> default_families(std::size_t count, std::uint64_t seed);

}  // namespace stubmatch::synth
