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

#include "stubmatch/registry.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "json_internal.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/hash.hpp"
#include "stubmatch/random.hpp"

namespace stubmatch {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kModel = "model.bin";
constexpr const char* kStats = "stats.json";
constexpr const char* kAudit = "audit.log";
constexpr const char* kGraphDir = "graphs";

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + p.string());
}

ojson options_to_json(const cluster::ClusterOptions& o) {
    ojson j;
    j["k_max"] = o.k_max;
    j["s_min"] = o.s_min;
    j["singleton_threshold"] = o.singleton_threshold;
    return j;
}

cluster::ClusterOptions options_from_json(const ojson& j) {
    cluster::ClusterOptions o;
    o.k_max = j.at("k_max").get<std::size_t>();
    o.s_min = j.at("s_min").get<double>();
    o.singleton_threshold = j.at("singleton_threshold").get<double>();
    return o;
}

std::string audit_text(const std::vector<AuditRecord>& audit) {
    std::string out;
    for (const auto& r : audit) {
        ojson j;
        j["sequence"] = r.sequence;
        j["event"] = r.event;
        j["mode"] = r.mode;
        j["packers"] = r.packers;
        j["samples"] = r.samples;
        j["cost"] = r.cost;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<AuditRecord> parse_audit(const std::string& text) {
    std::vector<AuditRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const ojson j = detail::parse_json_text(line);
        AuditRecord r;
        r.sequence = j.at("sequence").get<std::size_t>();
        r.event = j.at("event").get<std::string>();
        r.mode = j.at("mode").get<std::string>();
        r.packers = j.at("packers").get<std::vector<std::string>>();
        r.samples = j.at("samples").get<std::size_t>();
        r.cost = j.at("cost").get<std::size_t>();
        out.push_back(std::move(r));
    }
    return out;
}

struct Rendered {
    std::string manifest;
    std::string model;
    std::string stats;
    std::string audit;
};

Rendered render(const Registry& reg) {
    Rendered r;
    r.model = gmn::serialize_params(reg.model);
    r.stats = serialize_stats(reg.stats);
    r.audit = audit_text(reg.audit);

    ojson m;
    m["format_version"] = reg.version;
    m["model"] = {{"file", kModel}, {"sha256", sha256_hex(r.model)}};
    m["stats"] = {{"file", kStats}, {"sha256", sha256_hex(r.stats)}};
    m["audit"] = {{"file", kAudit}, {"records", reg.audit.size()}, {"sha256", sha256_hex(r.audit)}};
    m["cluster_options"] = options_to_json(reg.cluster_options);
    m["graph_count"] = reg.graphs.size();
    ojson packers = ojson::object();
    for (const auto& [name, entry] : reg.packers) {
        ojson p;
        p["graphs"] = entry.graphs;
        p["flat_threshold"] = entry.flat_threshold;
        ojson clusters = ojson::array();
        for (const auto& c : entry.clusters) {
            ojson cj;
            cj["medoid"] = c.medoid;
            cj["threshold"] = c.threshold;
            cj["low_confidence"] = c.low_confidence;
            cj["members"] = c.members;
            clusters.push_back(std::move(cj));
        }
        p["clusters"] = std::move(clusters);
        packers[name] = std::move(p);
    }
    m["packers"] = std::move(packers);
    r.manifest = m.dump(2) + "\n";
    return r;
}

std::vector<StubGraph> extract_labeled(std::span<const CallGraph> graphs) {
    std::vector<StubGraph> stubs;
    stubs.reserve(graphs.size());
    for (const auto& g : graphs) {
        if (!g.packer_label() || g.packer_label()->empty()) {
            throw InvalidArgument("graph '" + g.meta().sample_id + "' has no packer label");
        }
        stubs.push_back(extract_stub(g));
    }
    return stubs;
}

// Adds stubs to the graph store; returns their ids grouped by packer.
std::map<std::string, std::vector<GraphId>> store(Registry& reg, std::vector<StubGraph> stubs) {
    std::map<std::string, std::vector<GraphId>> by_packer;
    for (auto& s : stubs) {
        GraphId id = graph_id(s);
        const std::string label = *s.graph.packer_label();
        if (!reg.graphs.emplace(id, std::move(s)).second) {
            throw InvalidArgument("graph " + id + " is already stored (duplicate sample)");
        }
        by_packer[label].push_back(std::move(id));
    }
    return by_packer;
}

void append_audit(Registry& reg, std::string event, std::string mode, std::vector<std::string> packers,
                  std::size_t samples) {
    reg.audit.push_back({reg.audit.size() + 1, std::move(event), std::move(mode), std::move(packers), samples, samples});
}

}  // namespace

GraphId graph_id(const StubGraph& g) { return sha256_hex(serialize_stub(g)); }

std::size_t Registry::cluster_count() const {
    std::size_t m = 0;
    for (const auto& [name, entry] : packers) m += entry.clusters.size();
    return m;
}

void Registry::check_integrity() const {
    std::set<GraphId> claimed;
    for (const auto& [name, entry] : packers) {
        std::set<GraphId> members;
        for (const auto& id : entry.graphs) {
            auto it = graphs.find(id);
            if (it == graphs.end()) throw IntegrityError("packer " + name + ": graph " + id + " is not stored");
            if (it->second.graph.packer_label() != name) {
                throw IntegrityError("graph " + id + " is not labeled " + name);
            }
            if (!claimed.insert(id).second) throw IntegrityError("graph " + id + " belongs to two packers");
        }
        for (const auto& c : entry.clusters) {
            if (c.members.empty()) throw IntegrityError("packer " + name + " has an empty cluster");
            for (const auto& id : c.members) {
                if (!std::binary_search(entry.graphs.begin(), entry.graphs.end(), id)) {
                    throw IntegrityError("cluster member " + id + " is not a graph of packer " + name);
                }
                if (!members.insert(id).second) throw IntegrityError("graph " + id + " is in two clusters");
            }
            if (std::find(c.members.begin(), c.members.end(), c.medoid) == c.members.end()) {
                throw IntegrityError("medoid " + c.medoid + " is not a member of its cluster");
            }
        }
        if (members.size() != entry.graphs.size()) {
            throw IntegrityError("clusters of packer " + name + " do not cover its graphs");
        }
    }
    if (claimed.size() != graphs.size()) throw IntegrityError("stored graphs without a packer");
}

PackerEntry cluster_packer_entry(const Registry& reg, const std::vector<GraphId>& ids, std::size_t jobs) {
    PackerEntry entry;
    entry.graphs = ids;
    std::sort(entry.graphs.begin(), entry.graphs.end());
    std::vector<StubGraph> graphs;
    graphs.reserve(entry.graphs.size());
    for (const auto& id : entry.graphs) graphs.push_back(reg.graphs.at(id));

    const auto result = cluster::cluster_packer(graphs, reg.model, reg.stats, reg.cluster_options, jobs);
    for (const auto& c : result.clustering.clusters) {
        ClusterRecord rec;
        for (std::size_t i : c.members) rec.members.push_back(entry.graphs[i]);
        rec.medoid = entry.graphs[c.medoid];
        rec.threshold = c.threshold;
        rec.low_confidence = c.low_confidence;
        entry.clusters.push_back(std::move(rec));
    }
    if (entry.graphs.size() >= 2) {
        std::vector<std::size_t> all(entry.graphs.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        entry.flat_threshold = cluster::similarity_threshold(result.distances, all);
    } else {
        entry.flat_threshold = reg.cluster_options.singleton_threshold;
    }
    return entry;
}

Registry configure(std::span<const CallGraph> dataset, const ConfigureOptions& options) {
    gmn::validate(options.gmn);
    auto stubs = extract_labeled(dataset);
    std::set<std::string> labels;
    for (const auto& s : stubs) labels.insert(*s.graph.packer_label());
    if (labels.size() < 2) throw InvalidArgument("configuration needs graphs from at least two packers");

    Registry reg;
    reg.cluster_options = options.cluster;
    std::vector<CallGraph> stub_graphs;
    stub_graphs.reserve(stubs.size());
    for (const auto& s : stubs) stub_graphs.push_back(s.graph);
    reg.stats = compute_feature_stats(stub_graphs);

    // Train in content-address order so the model does not depend on input order.
    std::vector<std::pair<GraphId, const StubGraph*>> ordered;
    for (const auto& s : stubs) ordered.emplace_back(graph_id(s), &s);
    std::sort(ordered.begin(), ordered.end());
    std::vector<StubGraph> training;
    training.reserve(ordered.size());
    for (const auto& [id, s] : ordered) training.push_back(*s);
    reg.model = gmn::train(training, options.gmn, reg.stats, options.on_epoch).params;

    const auto by_packer = store(reg, std::move(stubs));
    for (const auto& [name, ids] : by_packer) reg.packers[name] = cluster_packer_entry(reg, ids, options.jobs);
    append_audit(reg, "configure", "train", std::vector<std::string>(labels.begin(), labels.end()), dataset.size());
    reg.check_integrity();
    return reg;
}

Registry configure(std::span<const CallGraph> dataset, const ConfigureOptions& options, const fs::path& out) {
    Registry reg = configure(dataset, options);
    save(reg, out);
    return reg;
}

Registry integrate(const Registry& base, std::span<const CallGraph> new_graphs, const IntegrateOptions& options) {
    if (new_graphs.empty()) throw InvalidArgument("integration needs at least one graph");
    auto stubs = extract_labeled(new_graphs);
    const std::string label = *stubs.front().graph.packer_label();
    for (const auto& s : stubs) {
        if (*s.graph.packer_label() != label) throw InvalidArgument("integrated graphs must share one packer label");
    }

    Registry reg = base;
    const std::size_t count = stubs.size();
    auto added = store(reg, std::move(stubs));
    std::vector<GraphId> ids = std::move(added[label]);
    if (auto it = base.packers.find(label); it != base.packers.end()) {
        ids.insert(ids.end(), it->second.graphs.begin(), it->second.graphs.end());
    }
    std::sort(ids.begin(), ids.end());

    if (!options.fine_tune) {
        reg.packers[label] = cluster_packer_entry(reg, ids, options.jobs);
        append_audit(reg, "integrate", "no_fine_tune", {label}, count);
        reg.check_integrity();
        return reg;
    }

    gmn::GmnConfig training = options.training.value_or(reg.model.config);
    training.seed = derive_seed(training.seed, reg.audit.size() + 1);

    std::vector<StubGraph> fresh;
    for (const auto& id : ids) fresh.push_back(reg.graphs.at(id));
    std::vector<StubGraph> old_sample;
    Rng rng(derive_seed(training.seed, 0x01d));
    for (const auto& [name, entry] : base.packers) {
        if (name == label) continue;
        std::vector<GraphId> pool = entry.graphs;
        rng.shuffle(pool);
        pool.resize(std::min(pool.size(), options.old_per_packer));
        std::sort(pool.begin(), pool.end());
        for (const auto& id : pool) old_sample.push_back(reg.graphs.at(id));
    }
    reg.model = gmn::fine_tune(reg.model, fresh, old_sample, training, reg.stats, options.on_epoch).params;

    std::map<std::string, std::vector<GraphId>> all = {{label, ids}};
    for (const auto& [name, entry] : base.packers) {
        if (name != label) all[name] = entry.graphs;
    }
    reg.packers.clear();
    for (const auto& [name, members] : all) reg.packers[name] = cluster_packer_entry(reg, members, options.jobs);
    append_audit(reg, "integrate", "fine_tune", {label}, count);
    reg.check_integrity();
    return reg;
}

void save(const Registry& reg, const fs::path& dir) {
    reg.check_integrity();
    const Rendered r = render(reg);
    const fs::path target = fs::absolute(dir);
    const std::string suffix = std::to_string(::getpid());
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp-" + suffix);
    std::error_code ec;
    fs::remove_all(tmp, ec);
    try {
        fs::create_directories(tmp / kGraphDir);
        for (const auto& [id, g] : reg.graphs) write_file(tmp / kGraphDir / (id + ".cg.json"), serialize_stub(g));
        write_file(tmp / kModel, r.model);
        write_file(tmp / kStats, r.stats);
        write_file(tmp / kAudit, r.audit);
        write_file(tmp / kManifest, r.manifest);

        if (fs::exists(target)) {
            const fs::path old = target.parent_path() / (target.filename().string() + ".old-" + suffix);
            fs::remove_all(old, ec);
            fs::rename(target, old);
            fs::rename(tmp, target);
            fs::remove_all(old, ec);
        } else {
            fs::rename(tmp, target);
        }
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(tmp, ec);
        throw IoError(std::string("saving registry failed: ") + e.what());
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
}

Registry load(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("registry " + dir.string() + " does not exist");
    const ojson m = detail::parse_json_text(read_file(dir / kManifest));
    Registry reg;
    try {
        reg.version = m.at("format_version").get<int>();
        if (reg.version != kRegistryVersion) {
            throw VersionError("registry format version " + std::to_string(reg.version) +
                               " needs migration to version " + std::to_string(kRegistryVersion));
        }
        const std::string model = read_file(dir / kModel);
        if (sha256_hex(model) != m.at("model").at("sha256").get<std::string>()) {
            throw CorruptionError("model.bin does not match its manifest hash");
        }
        reg.model = gmn::parse_params(model);

        const std::string stats = read_file(dir / kStats);
        if (sha256_hex(stats) != m.at("stats").at("sha256").get<std::string>()) {
            throw CorruptionError("stats.json does not match its manifest hash");
        }
        reg.stats = parse_stats(stats);

        const std::string audit = read_file(dir / kAudit);
        if (sha256_hex(audit) != m.at("audit").at("sha256").get<std::string>()) {
            throw CorruptionError("audit.log does not match its manifest hash");
        }
        reg.audit = parse_audit(audit);
        reg.cluster_options = options_from_json(m.at("cluster_options"));

        for (const auto& [name, p] : m.at("packers").items()) {
            PackerEntry entry;
            entry.graphs = p.at("graphs").get<std::vector<GraphId>>();
            entry.flat_threshold = p.at("flat_threshold").get<double>();
            for (const auto& cj : p.at("clusters")) {
                ClusterRecord c;
                c.medoid = cj.at("medoid").get<GraphId>();
                c.threshold = cj.at("threshold").get<double>();
                c.low_confidence = cj.at("low_confidence").get<bool>();
                c.members = cj.at("members").get<std::vector<GraphId>>();
                entry.clusters.push_back(std::move(c));
            }
            for (const auto& id : entry.graphs) {
                const fs::path file = dir / kGraphDir / (id + ".cg.json");
                if (!fs::exists(file)) throw CorruptionError("graph " + id + " is missing");
                const std::string bytes = read_file(file);
                if (sha256_hex(bytes) != id) throw CorruptionError("graph " + id + " does not match its content hash");
                reg.graphs.emplace(id, parse_stub(bytes));
            }
            reg.packers.emplace(name, std::move(entry));
        }
        if (m.at("graph_count").get<std::size_t>() != reg.graphs.size()) {
            throw CorruptionError("manifest graph count does not match the stored graphs");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("manifest: ") + e.what());
    }
    reg.check_integrity();
    return reg;
}

std::string content_hash(const Registry& reg) {
    const Rendered r = render(reg);
    return sha256_hex(r.manifest + r.audit);
}

}  // namespace stubmatch
