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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "../support/fixtures.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/registry.hpp"

using namespace stubmatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("stubmatch-test-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

const Registry& shared() {
    static const Registry reg = fixture::small_registry();
    return reg;
}

}  // namespace

TEST_SUITE("registry") {
    TEST_CASE("configure builds one entry per packer") {
        const Registry& reg = shared();
        CHECK(reg.packers.size() == 3);
        CHECK(reg.cluster_count() >= 3);
        CHECK(reg.graphs.size() == 18);
        REQUIRE(reg.audit.size() == 1);
        CHECK(reg.audit[0].event == "configure");
        CHECK(reg.audit[0].sequence == 1);
        CHECK(reg.audit[0].samples == 18);
        CHECK_NOTHROW(reg.check_integrity());
        for (const auto& [id, g] : reg.graphs) CHECK(graph_id(g) == id);
    }

    TEST_CASE("configure is deterministic") {
        CHECK(content_hash(fixture::small_registry()) == content_hash(shared()));
    }

    TEST_CASE("configure preconditions") {
        ConfigureOptions o;
        o.gmn = fixture::small_config();
        CHECK_THROWS_AS(configure(fixture::corpus(1, 5), o), InvalidArgument);
        auto unlabeled = fixture::corpus(2, 3);
        auto meta = unlabeled[0].meta();
        meta.packer_label.reset();
        unlabeled[0] = CallGraph(meta, {unlabeled[0].nodes().begin(), unlabeled[0].nodes().end()},
                                 {unlabeled[0].edges().begin(), unlabeled[0].edges().end()});
        CHECK_THROWS_AS(configure(unlabeled, o), InvalidArgument);
    }

    TEST_CASE("save and load round trip") {
        TempDir tmp;
        const fs::path dir = tmp.path / "reg";
        save(shared(), dir);
        CHECK(fs::exists(dir / "manifest.json"));
        CHECK(fs::exists(dir / "model.bin"));
        CHECK(fs::exists(dir / "stats.json"));
        CHECK(fs::exists(dir / "audit.log"));
        const Registry back = load(dir);
        CHECK(back == shared());
        CHECK(content_hash(back) == content_hash(shared()));
        // Saving again over an existing registry replaces it atomically.
        save(back, dir);
        CHECK(load(dir) == shared());
        for (const auto& entry : fs::directory_iterator(tmp.path)) CHECK(entry.path().filename() == "reg");
    }

    TEST_CASE("corrupted graph names its id") {
        TempDir tmp;
        const fs::path dir = tmp.path / "reg";
        save(shared(), dir);
        const GraphId victim = shared().graphs.begin()->first;
        const fs::path file = dir / "graphs" / (victim + ".cg.json");
        const std::string text = slurp(file);
        spit(file, text.substr(0, text.size() / 2));
        try {
            load(dir);
            FAIL("expected a corruption error");
        } catch (const CorruptionError& e) {
            CHECK(std::string(e.what()).find(victim) != std::string::npos);
        }
    }

    TEST_CASE("model and version checks") {
        TempDir tmp;
        const fs::path dir = tmp.path / "reg";
        save(shared(), dir);
        SUBCASE("model blob flipped") {
            std::string blob = slurp(dir / "model.bin");
            blob[blob.size() / 3] ^= 0x10;
            spit(dir / "model.bin", blob);
            CHECK_THROWS_AS(load(dir), CorruptionError);
        }
        SUBCASE("audit edited") {
            spit(dir / "audit.log", slurp(dir / "audit.log") + "\n");
            CHECK_THROWS_AS(load(dir), CorruptionError);
        }
        SUBCASE("future format version") {
            std::string manifest = slurp(dir / "manifest.json");
            const auto at = manifest.find("\"format_version\": 1");
            REQUIRE(at != std::string::npos);
            manifest.replace(at, std::string("\"format_version\": 1").size(), "\"format_version\": 99");
            spit(dir / "manifest.json", manifest);
            CHECK_THROWS_AS(load(dir), VersionError);
        }
        SUBCASE("missing directory") { CHECK_THROWS_AS(load(tmp.path / "nothing"), IoError); }
    }

    TEST_CASE("integrate without fine-tuning leaves existing packers untouched") {
        const auto fresh = fixture::corpus(4, 6);
        std::vector<CallGraph> new_graphs;
        for (const auto& g : fresh)
            if (g.packer_label() == "packer_03") new_graphs.push_back(g);
        const Registry after = integrate(shared(), new_graphs, {});
        CHECK(after.packers.size() == 4);
        CHECK(after.model == shared().model);
        CHECK(after.stats == shared().stats);
        for (const auto& [name, entry] : shared().packers) CHECK(after.packers.at(name) == entry);
        REQUIRE(after.audit.size() == 2);
        CHECK(after.audit[1].mode == "no_fine_tune");
        CHECK(after.audit[1].cost == 6);
        CHECK(after.audit[1].sequence == 2);
        CHECK_NOTHROW(after.check_integrity());

        // Byte-level: stored weights and graph files are unchanged.
        TempDir tmp;
        save(shared(), tmp.path / "a");
        save(after, tmp.path / "b");
        CHECK(slurp(tmp.path / "a" / "model.bin") == slurp(tmp.path / "b" / "model.bin"));
        for (const auto& [id, g] : shared().graphs) {
            const fs::path rel = fs::path("graphs") / (id + ".cg.json");
            CHECK(slurp(tmp.path / "a" / rel) == slurp(tmp.path / "b" / rel));
        }
    }

    TEST_CASE("integrate with fine-tuning updates the model") {
        const auto fresh = fixture::corpus(4, 6);
        std::vector<CallGraph> new_graphs;
        for (const auto& g : fresh)
            if (g.packer_label() == "packer_03") new_graphs.push_back(g);
        IntegrateOptions o;
        o.fine_tune = true;
        const Registry after = integrate(shared(), new_graphs, o);
        CHECK(after.model != shared().model);
        CHECK(after.audit.back().mode == "fine_tune");
        CHECK(after.audit.back().cost == 6);
        CHECK(after.packers.size() == 4);
        CHECK_NOTHROW(after.check_integrity());
        CHECK(content_hash(integrate(shared(), new_graphs, o)) == content_hash(after));
    }

    TEST_CASE("integrate preconditions") {
        CHECK_THROWS_AS(integrate(shared(), {}, {}), InvalidArgument);
        const auto mixed = fixture::corpus(2, 2);
        CHECK_THROWS_AS(integrate(shared(), mixed, {}), InvalidArgument);
    }

    TEST_CASE("integrating into an existing packer extends it") {
        std::vector<CallGraph> more;
        for (const auto& g : fixture::corpus(1, 3, 6)) more.push_back(g);
        const Registry after = integrate(shared(), more, {});
        CHECK(after.packers.size() == 3);
        CHECK(after.packers.at("packer_00").graphs.size() == 9);
        CHECK(after.packers.at("packer_01") == shared().packers.at("packer_01"));
    }
}
