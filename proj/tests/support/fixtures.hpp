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

#include <string>
#include <vector>

#include "stubmatch/call_graph.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/registry.hpp"
#include "stubmatch/synth.hpp"

namespace fixture {

inline std::string path(const std::string& name) { return std::string(STUBMATCH_FIXTURE_DIR) + "/" + name; }

/// A cheap model configuration for tests that only need a trained registry.
inline stubmatch::gmn::GmnConfig small_config(std::uint64_t seed = 0) {
    stubmatch::gmn::GmnConfig c;
    c.node_hidden_dim = 8;
    c.message_dim = 8;
    c.propagation_rounds = 2;
    c.epochs = 8;
    c.pairs_per_epoch = 64;
    c.batch_pairs = 16;
    c.fine_tune_epochs = 3;
    c.seed = seed;
    return c;
}

/// `per_family` graphs from each of the first `families` default families.
inline std::vector<stubmatch::CallGraph> corpus(std::size_t families, std::size_t per_family, std::size_t skip = 0,
                                                std::uint64_t seed = 0) {
    std::vector<stubmatch::CallGraph> out;
    for (const auto& f : stubmatch::synth::default_families(families, seed)) {
        const auto g = stubmatch::synth::generate_family(f, skip + per_family);
        out.insert(out.end(), g.begin() + static_cast<std::ptrdiff_t>(skip), g.end());
    }
    return out;
}

inline stubmatch::Registry small_registry(std::size_t families = 3, std::size_t per_family = 6,
                                          std::uint64_t seed = 0) {
    stubmatch::ConfigureOptions o;
    o.gmn = small_config(seed);
    return stubmatch::configure(corpus(families, per_family, 0, seed), o);
}

}  // namespace fixture
