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

#include <doctest.h>

#include <map>

#include "../support/fixtures.hpp"
#include "../support/scripted.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/identify.hpp"

using namespace stubmatch;
using scripted::HandRegistry;
using scripted::probe;
using scripted::ScriptedIdentifier;

TEST_SUITE("identify") {
    TEST_CASE("score formula: medoid of A with every member passing") {
        HandRegistry h;
        h.add_packer("A", {4});
        h.add_packer("B", {3});
        std::map<GraphId, double> sims;
        for (const auto& id : h.ids["A"]) sims[id] = 0.95;
        sims[h.ids["A"][0]] = 1.0;
        const auto r = ScriptedIdentifier(h.reg, sims).identify(probe());
        CHECK(r.verdict == "A");
        CHECK(r.score == 1.0);
        CHECK(r.selected.size() == 1);
        CHECK(r.inference_calls == 2 + 4);
    }

    TEST_CASE("score formula: nothing gates in") {
        HandRegistry h;
        h.add_packer("A", {4, 2});
        h.add_packer("B", {3});
        std::map<GraphId, double> sims;
        for (const auto& [p, list] : h.ids)
            for (const auto& id : list) sims[id] = 0.0;  // not strictly positive
        const auto r = ScriptedIdentifier(h.reg, sims).identify(probe());
        CHECK(r.unknown());
        CHECK(r.inference_calls == 3);
        CHECK(r.selected.empty());
    }

    TEST_CASE("score formula: 6 of 10 against 5 of 20") {
        HandRegistry h;
        h.add_packer("A", {10});
        h.add_packer("B", {20});
        std::map<GraphId, double> sims;
        for (std::size_t i = 0; i < 10; ++i) sims[h.ids["A"][i]] = i < 6 ? 0.8 : 0.2;
        for (std::size_t i = 0; i < 20; ++i) sims[h.ids["B"][i]] = i < 5 ? 0.8 : 0.2;
        const auto r = ScriptedIdentifier(h.reg, sims).identify(probe());
        CHECK(r.verdict == "A");
        CHECK(r.score == 6.0 / 20.0);
        CHECK(r.per_packer_scores.at("A") == 6.0 / 20.0);
        CHECK(r.per_packer_scores.at("B") == 5.0 / 20.0);
        CHECK(r.inference_calls == 2 + 30);
    }

    TEST_CASE("zero best score") {
        HandRegistry h;
        h.add_packer("A", {3});
        h.add_packer("B", {3});
        std::map<GraphId, double> sims;
        for (const auto& id : h.ids["A"]) sims[id] = 0.1;  // gates in, fails the threshold
        CHECK(ScriptedIdentifier(h.reg, sims).identify(probe()).unknown());
        IdentifyOptions lenient;
        lenient.unknown_on_zero_score = false;
        CHECK(ScriptedIdentifier(h.reg, sims, lenient).identify(probe()).verdict == "A");
    }

    TEST_CASE("decide: ties and bounds") {
        std::map<std::string, PackerTally> t;
        t["b"] = {3, 6};
        t["a"] = {3, 6};
        CHECK(decide(t, true).verdict == "a");
        t["c"] = {0, 12};
        const auto d = decide(t, true);
        CHECK(d.score == 3.0 / 12.0);
        for (const auto& [p, s] : d.per_packer_scores) {
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
        }
        CHECK(!decide({}, true).verdict.has_value());
    }

    TEST_CASE("duplicating a failing member never raises the score") {
        HandRegistry h;
        h.add_packer("A", {5});
        h.add_packer("B", {5});
        std::map<GraphId, double> sims;
        for (std::size_t i = 0; i < 5; ++i) sims[h.ids["A"][i]] = i < 3 ? 0.9 : 0.1;
        for (std::size_t i = 0; i < 5; ++i) sims[h.ids["B"][i]] = i < 4 ? 0.9 : 0.1;
        const double before = ScriptedIdentifier(h.reg, sims).identify(probe()).per_packer_scores.at("B");
        auto& cluster = h.reg.packers["B"].clusters[0];
        cluster.members.push_back(cluster.members.back());
        const double after = ScriptedIdentifier(h.reg, sims).identify(probe()).per_packer_scores.at("B");
        CHECK(after <= before);
    }

    TEST_CASE("removing a non-selected cluster keeps the verdict") {
        HandRegistry h;
        h.add_packer("A", {3, 3});
        h.add_packer("B", {3});
        std::map<GraphId, double> sims;
        for (std::size_t i = 0; i < 3; ++i) sims[h.ids["A"][i]] = 0.9;  // first A cluster only
        const auto before = ScriptedIdentifier(h.reg, sims).identify(probe());
        h.reg.packers["A"].clusters.pop_back();
        const auto after = ScriptedIdentifier(h.reg, sims).identify(probe());
        CHECK(before.verdict == after.verdict);
        CHECK(before.score == after.score);
    }

    TEST_CASE("flat mode consults every stored graph") {
        HandRegistry h;
        h.add_packer("A", {4, 3});
        h.add_packer("B", {5});
        std::map<GraphId, double> sims;
        const auto r = ScriptedIdentifier(h.reg, sims).identify_flat(probe());
        CHECK(r.inference_calls == 12);
        CHECK(!r.unknown());
    }

    TEST_CASE("real registry: calls, self match, batches") {
        const Registry reg = fixture::small_registry();
        const Identifier id(reg);
        const auto inputs = fixture::corpus(3, 4, 6);
        const auto batch = id.identify_batch(inputs);
        REQUIRE(batch.size() == inputs.size());
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto single = id.identify(inputs[i]);
            CHECK(single == batch[i]);
            std::size_t expected = reg.cluster_count();
            for (const auto& s : single.selected)
                expected += reg.packers.at(s.packer).clusters[s.cluster_index].members.size();
            CHECK(single.inference_calls == expected);
            CHECK(single.inference_calls >= reg.cluster_count());
            if (!single.unknown()) CHECK(single.score == single.per_packer_scores.at(*single.verdict));
        }
        IdentifyOptions parallel;
        parallel.jobs = 3;
        CHECK(identify_batch(inputs, reg, parallel) == batch);
        CHECK(identify_batch(std::span(inputs).first(1), reg).front() == identify(inputs[0], reg));

        const auto flat = id.identify_batch(inputs, true);
        for (const auto& r : flat) {
            CHECK(r.inference_calls == reg.graphs.size());
            CHECK(!r.unknown());
        }
    }

    TEST_CASE("a failing batch item does not stop the batch") {
        class Fragile : public Identifier {
        public:
            using Identifier::Identifier;

        protected:
            double similarity(const gmn::PreparedGraph& in, const GraphId&) const override {
                if (in.size() == 2) throw NumericError("scripted failure");
                return 0.9;
            }
        };
        HandRegistry h;
        h.add_packer("A", {2});
        h.add_packer("B", {2});
        FunctionNode a{0, NodeKind::entry, {}}, b{1, NodeKind::entry, {}};
        a.features[0] = b.features[0] = kind_code(NodeKind::entry);
        const std::vector<CallGraph> inputs = {probe(), CallGraph({"two", "", std::nullopt, {0, 1}}, {a, b}, {}),
                                               probe()};
        const auto out = Fragile(h.reg).identify_batch(inputs);
        REQUIRE(out.size() == 3);
        CHECK(!out[0].error.has_value());
        CHECK(out[1].error == "scripted failure");
        CHECK(out[1].sample_id == "two");
        CHECK(out[2] == out[0]);
    }

    TEST_CASE("empty registry is rejected") {
        Registry empty;
        CHECK_THROWS_AS(Identifier{empty}, InvalidArgument);
    }

    TEST_CASE("result rendering") {
        IdentificationResult r;
        r.sample_id = "s1";
        r.score = 0.5;
        r.inference_calls = 7;
        r.branch = StubBranch::no_edges_fallback;
        const std::string json = result_to_json(r);
        CHECK(json.find("\"verdict\":\"UNKNOWN\"") != std::string::npos);
        CHECK(json.find("\"stub_branch\":\"no_edges_fallback\"") != std::string::npos);
        CHECK(csv_header() == "sample_id,verdict,score,inference_calls,stub_branch,error");
        r.verdict = "upx";
        CHECK(result_to_csv(r).rfind("s1,upx,", 0) == 0);
    }
}
