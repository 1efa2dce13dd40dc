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

#include "stubmatch/identify.hpp"

#include <cstdio>

#include "json.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/parallel.hpp"

namespace stubmatch {

Decision decide(const std::map<std::string, PackerTally>& tallies, bool unknown_on_zero_score) {
    Decision d;
    std::size_t denominator = 0;
    for (const auto& [name, t] : tallies) {
        if (t.passes > t.members) throw InvalidArgument("packer " + name + " passes more members than it compared");
        denominator = std::max(denominator, t.members);
    }
    if (denominator == 0) return d;

    const std::string* best = nullptr;
    std::size_t best_passes = 0;
    for (const auto& [name, t] : tallies) {
        // Equal pass counts over a shared denominator give equal scores, so
        // comparing passes is exact; map order makes the first name win ties.
        d.per_packer_scores[name] = static_cast<double>(t.passes) / static_cast<double>(denominator);
        if (best == nullptr || t.passes > best_passes) {
            best = &name;
            best_passes = t.passes;
        }
    }
    d.score = d.per_packer_scores.at(*best);
    if (d.score > 0.0 || !unknown_on_zero_score) d.verdict = *best;
    return d;
}

Identifier::Identifier(const Registry& reg, IdentifyOptions options) : reg_(reg), options_(options) {
    if (reg.packers.empty()) throw InvalidArgument("registry has no packers");
    for (const auto& [id, g] : reg.graphs) prepared_.emplace(id, gmn::prepare(g.graph, reg.stats));
}

double Identifier::similarity(const gmn::PreparedGraph& input, const GraphId& stored) const {
    return gmn::similarity(input, prepared_.at(stored), reg_.model);
}

IdentificationResult Identifier::run(const CallGraph& g, bool flat) const {
    IdentificationResult r;
    r.sample_id = g.meta().sample_id;
    const StubGraph stub = extract_stub(g);
    r.branch = stub.branch;
    const gmn::PreparedGraph input = gmn::prepare(stub.graph, reg_.stats);
    auto sim = [&](const GraphId& id) {
        ++r.inference_calls;
        return similarity(input, id);
    };

    std::map<std::string, PackerTally> tallies;
    if (flat) {
        for (const auto& [name, entry] : reg_.packers) {
            PackerTally& t = tallies[name];
            for (const auto& id : entry.graphs) {
                ++t.members;
                if (sim(id) >= entry.flat_threshold) ++t.passes;
            }
        }
        Decision d = decide(tallies, false);
        r.verdict = std::move(d.verdict);
        r.score = d.score;
        r.per_packer_scores = std::move(d.per_packer_scores);
        return r;
    }

    for (const auto& [name, entry] : reg_.packers) {
        for (std::size_t c = 0; c < entry.clusters.size(); ++c) {
            const double s = sim(entry.clusters[c].medoid);
            if (s > 0.0) r.selected.push_back({name, c, s});
        }
    }
    for (const auto& sel : r.selected) {
        const ClusterRecord& cluster = reg_.packers.at(sel.packer).clusters[sel.cluster_index];
        PackerTally& t = tallies[sel.packer];
        for (const auto& id : cluster.members) {
            ++t.members;
            if (sim(id) >= cluster.threshold) ++t.passes;
        }
    }
    Decision d = decide(tallies, options_.unknown_on_zero_score);
    r.verdict = std::move(d.verdict);
    r.score = d.score;
    r.per_packer_scores = std::move(d.per_packer_scores);
    return r;
}

IdentificationResult Identifier::identify(const CallGraph& g) const { return run(g, false); }

IdentificationResult Identifier::identify_flat(const CallGraph& g) const { return run(g, true); }

std::vector<IdentificationResult> Identifier::identify_batch(std::span<const CallGraph> inputs, bool flat) const {
    std::vector<IdentificationResult> out(inputs.size());
    parallel_for(inputs.size(), options_.jobs, [&](std::size_t i) {
        try {
            out[i] = run(inputs[i], flat);
        } catch (const std::exception& e) {
            out[i] = IdentificationResult{};
            out[i].sample_id = inputs[i].meta().sample_id;
            out[i].error = e.what();
        }
    });
    return out;
}

IdentificationResult identify(const CallGraph& g, const Registry& reg, const IdentifyOptions& options) {
    return Identifier(reg, options).identify(g);
}

IdentificationResult identify_flat(const CallGraph& g, const Registry& reg, const IdentifyOptions& options) {
    return Identifier(reg, options).identify_flat(g);
}

std::vector<IdentificationResult> identify_batch(std::span<const CallGraph> inputs, const Registry& reg,
                                                 const IdentifyOptions& options, bool flat) {
    return Identifier(reg, options).identify_batch(inputs, flat);
}

std::string result_to_json(const IdentificationResult& r) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["verdict"] = r.verdict ? nlohmann::ordered_json(*r.verdict) : nlohmann::ordered_json("UNKNOWN");
    j["score"] = r.score;
    j["per_packer_scores"] = nlohmann::ordered_json::object();
    for (const auto& [name, s] : r.per_packer_scores) j["per_packer_scores"][name] = s;
    j["selected_clusters"] = nlohmann::ordered_json::array();
    for (const auto& s : r.selected) {
        j["selected_clusters"].push_back(
            {{"packer", s.packer}, {"cluster", s.cluster_index}, {"medoid_similarity", s.medoid_similarity}});
    }
    j["inference_calls"] = r.inference_calls;
    j["stub_branch"] = std::string(to_string(r.branch));
    if (r.error) j["error"] = *r.error;
    return j.dump();
}

std::string csv_header() { return "sample_id,verdict,score,inference_calls,stub_branch,error"; }

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string result_to_csv(const IdentificationResult& r) {
    char score[32];
    std::snprintf(score, sizeof(score), "%.6f", r.score);
    return csv_field(r.sample_id) + "," + csv_field(r.verdict.value_or("UNKNOWN")) + "," + score + "," +
           std::to_string(r.inference_calls) + "," + std::string(to_string(r.branch)) + "," +
           csv_field(r.error.value_or(""));
}

}  // namespace stubmatch
