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

#include "stubmatch/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "json.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/identify.hpp"
#include "stubmatch/metrics.hpp"
#include "stubmatch/parallel.hpp"
#include "stubmatch/registry.hpp"
#include "stubmatch/stub_extract.hpp"
#include "stubmatch/synth.hpp"

namespace stubmatch::cli {

namespace fs = std::filesystem;

namespace {

struct Settings {
    std::string registry = "stubmatch.registry";
    std::string log_level = "info";
    std::size_t jobs = 0;  // 0 = all logical cores
    std::string format = "json";
    std::string out;

    // Model and clustering overrides.
    gmn::GmnConfig gmn;
    std::string loss_form = "reinterpreted";
    cluster::ClusterOptions cluster;
    bool unknown_on_zero_score = true;
};

std::size_t jobs_of(const Settings& s) { return s.jobs == 0 ? default_jobs() : s.jobs; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream o(p, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError("cannot write " + p.string());
    o << text;
    if (!o) throw IoError("write failed for " + p.string());
}

bool is_graph_file(const fs::path& p) {
    const std::string name = p.filename().string();
    return name.size() > 8 && name.ends_with(".cg.json");
}

/// Graph files under `dir`, sorted by name.
std::vector<fs::path> list_graphs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_graph_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

/// sample_id -> packer label. Uses `explicit_path`, else dir/manifest.json if present.
std::map<std::string, std::string> load_manifest(const fs::path& dir, const std::string& explicit_path) {
    fs::path p = explicit_path.empty() ? dir / "manifest.json" : fs::path(explicit_path);
    if (explicit_path.empty() && !fs::exists(p)) return {};
    try {
        const auto j = nlohmann::json::parse(read_text(p));
        return j.get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest " + p.string() + ": " + e.what());
    }
}

std::vector<CallGraph> load_dataset(const fs::path& dir, const std::string& manifest_path) {
    const auto manifest = load_manifest(dir, manifest_path);
    std::vector<CallGraph> graphs;
    for (const auto& f : list_graphs(dir)) {
        CallGraph g = [&] {
            try {
                return load_graph_file(f.string());
            } catch (const Error& e) {
                throw ParseError(f.string() + ": " + e.what());
            }
        }();
        if (auto it = manifest.find(g.meta().sample_id); it != manifest.end()) g = g.with_label(it->second);
        graphs.push_back(std::move(g));
    }
    if (graphs.empty()) throw InvalidArgument("no .cg.json files in " + dir.string());
    return graphs;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err, const std::string& level) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto log = std::make_shared<spdlog::logger>("stubmatch", sink);
    log->set_pattern("[%l] %v");
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw InvalidArgument("unknown log level '" + level + "'");
    log->set_level(lvl);
    return log;
}

void print_summary(const Registry& reg, std::ostream& out) {
    out << "packer\tgraphs\tclusters\tflat_threshold\n";
    for (const auto& [name, entry] : reg.packers) {
        char t[32];
        std::snprintf(t, sizeof(t), "%.4f", entry.flat_threshold);
        out << name << '\t' << entry.graphs.size() << '\t' << entry.clusters.size() << '\t' << t << '\n';
    }
    out << "total clusters: " << reg.cluster_count() << ", content hash: " << content_hash(reg) << '\n';
}

void emit_results(const std::vector<IdentificationResult>& results, const std::string& format, std::ostream& out) {
    if (format == "json") {
        for (const auto& r : results) out << result_to_json(r) << '\n';
    } else if (format == "csv") {
        out << csv_header() << '\n';
        for (const auto& r : results) out << result_to_csv(r) << '\n';
    } else {
        char line[256];
        std::snprintf(line, sizeof(line), "%-32s %-20s %-8s %-6s %s\n", "sample", "verdict", "score", "calls",
                      "stub");
        out << line;
        for (const auto& r : results) {
            std::snprintf(line, sizeof(line), "%-32s %-20s %-8.4f %-6zu %s\n", r.sample_id.c_str(),
                          r.error ? "ERROR" : r.verdict.value_or("UNKNOWN").c_str(), r.score, r.inference_calls,
                          std::string(to_string(r.branch)).c_str());
            out << line;
        }
    }
}

/// Writes to --out when given, otherwise to `out`.
template <typename Fn>
void with_output(const Settings& s, std::ostream& out, Fn&& fn) {
    if (s.out.empty()) {
        fn(out);
        return;
    }
    std::ostringstream buf;
    fn(buf);
    write_text(s.out, buf.str());
}

gmn::EpochCallback epoch_logger(const std::shared_ptr<spdlog::logger>& log) {
    return [log](const gmn::EpochRecord& e) { log->debug("epoch {} mean loss {:.6f}", e.epoch, e.mean_loss); };
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Settings s;
    CLI::App app{"Packer identification from unpacking-stub call graphs", "stubmatch"};
    app.allow_config_extras(false);
    app.set_config("--config", "stubmatch.toml", "Key/value config file (TOML); flags override it");
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("-r,--registry", s.registry, "Registry directory")->capture_default_str();
    app.add_option("--log-level", s.log_level, "trace, debug, info, warn, error or off")->capture_default_str();
    app.add_option("-j,--jobs", s.jobs, "Worker threads; 0 uses every logical core")->capture_default_str();

    // stub
    std::string stub_in;
    auto* stub = app.add_subcommand("stub", "Extract the unpacking-stub graph of one call graph");
    stub->add_option("input", stub_in, "Input .cg.json")->required();
    stub->add_option("-o,--out", s.out, "Output path (default: <input>.stub.cg.json)");

    // configure
    std::string dataset, manifest;
    auto* conf = app.add_subcommand("configure", "Train the model and cluster every packer of a labeled dataset");
    conf->add_option("dataset", dataset, "Directory of labeled .cg.json files")->required();
    conf->add_option("-m,--manifest", manifest, "JSON object mapping sample_id to packer label");
    conf->add_option("--epochs", s.gmn.epochs)->capture_default_str();
    conf->add_option("--learning-rate", s.gmn.learning_rate)->capture_default_str();
    conf->add_option("--margin", s.gmn.margin)->capture_default_str();
    conf->add_option("--hidden-dim", s.gmn.node_hidden_dim)->capture_default_str();
    conf->add_option("--message-dim", s.gmn.message_dim)->capture_default_str();
    conf->add_option("--rounds", s.gmn.propagation_rounds)->capture_default_str();
    conf->add_option("--embedding-dim", s.gmn.embedding_dim)->capture_default_str();
    conf->add_option("--batch-pairs", s.gmn.batch_pairs)->capture_default_str();
    conf->add_option("--pairs-per-epoch", s.gmn.pairs_per_epoch)->capture_default_str();
    conf->add_option("--loss-form", s.loss_form, "reinterpreted or as_written")->capture_default_str();
    conf->add_option("--seed", s.gmn.seed)->capture_default_str();
    conf->add_option("--k-max", s.cluster.k_max)->capture_default_str();
    conf->add_option("--s-min", s.cluster.s_min)->capture_default_str();

    // identify
    std::vector<std::string> inputs;
    bool flat = false;
    auto* ident = app.add_subcommand("identify", "Identify the packer of each input call graph");
    ident->add_option("inputs", inputs, ".cg.json files or directories of them")->required();
    ident->add_flag("--flat", flat, "Compare against every stored graph instead of gating by cluster");
    ident->add_option("--format", s.format)->check(CLI::IsMember({"json", "csv", "table"}))->capture_default_str();
    ident->add_option("-o,--out", s.out, "Write results here instead of standard output");
    ident->add_option("--unknown-on-zero-score", s.unknown_on_zero_score)->capture_default_str();

    // integrate
    std::string new_dir, new_manifest, integrate_out;
    bool fine_tune = false;
    std::size_t old_per_packer = 20;
    auto* integ = app.add_subcommand("integrate", "Add the graphs of one packer to a registry");
    integ->add_option("dataset", new_dir, "Directory of .cg.json files sharing one label")->required();
    integ->add_option("-m,--manifest", new_manifest);
    integ->add_flag("--fine-tune", fine_tune, "Fine-tune the model and recluster every packer");
    integ->add_option("--old-per-packer", old_per_packer)->capture_default_str();
    integ->add_option("--fine-tune-epochs", s.gmn.fine_tune_epochs)->capture_default_str();
    integ->add_option("-o,--out", integrate_out, "Write the new registry here (default: in place)");

    // eval
    std::string test_dir, test_manifest;
    bool eval_flat = false;
    std::string eval_format = "json";
    auto* eval = app.add_subcommand("eval", "Identify a labeled test set and report metrics");
    eval->add_option("dataset", test_dir, "Directory of labeled .cg.json files")->required();
    eval->add_option("-m,--manifest", test_manifest);
    eval->add_flag("--flat", eval_flat);
    eval->add_option("--format", eval_format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    eval->add_option("-o,--out", s.out);

    // bench
    metrics::BenchOptions bench_opts;
    std::string bench_format = "table";
    auto* bench = app.add_subcommand("bench", "Inference-call accounting on synthetic packer families");
    bench->add_option("--packers", bench_opts.packer_counts, "Packer counts to configure")->capture_default_str();
    bench->add_option("--samples-per-packer", bench_opts.samples_per_packer)->capture_default_str();
    bench->add_option("--test-per-packer", bench_opts.test_per_packer)->capture_default_str();
    bench->add_option("--seed", bench_opts.seed)->capture_default_str();
    bench->add_option("--epochs", s.gmn.epochs)->capture_default_str();
    bench->add_option("--format", bench_format)->check(CLI::IsMember({"csv", "table"}))->capture_default_str();
    bench->add_option("-o,--out", s.out);

    // clusters inspect
    auto* clusters = app.add_subcommand("clusters", "Inspect stored clusters");
    clusters->require_subcommand(1);
    auto* inspect = clusters->add_subcommand("inspect", "Per-cluster size, medoid and threshold");

    // generate
    std::string gen_dir;
    std::size_t gen_families = 3, gen_per_family = 10, gen_skip = 0, gen_first = 0;
    std::uint64_t gen_seed = 0;
    auto* gen = app.add_subcommand("generate", "Write a synthetic labeled corpus");
    gen->add_option("out", gen_dir, "Output directory")->required();
    gen->add_option("--families", gen_families, "Number of families")->capture_default_str();
    gen->add_option("--first-family", gen_first, "Index of the first family to write")->capture_default_str();
    gen->add_option("--per-family", gen_per_family)->capture_default_str();
    gen->add_option("--skip", gen_skip, "Samples to skip per family (for disjoint held-out sets)")
        ->capture_default_str();
    gen->add_option("--seed", gen_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    std::shared_ptr<spdlog::logger> log;
    try {
        log = make_logger(err, s.log_level);
        s.gmn.loss_form = gmn::parse_loss_form(s.loss_form);

        if (*stub) {
            const CallGraph g = load_graph_file(stub_in);
            const StubGraph sg = extract_stub(g);
            std::string target = s.out;
            if (target.empty()) {
                target = stub_in;
                if (target.ends_with(".cg.json")) target.resize(target.size() - 8);
                target += ".stub.cg.json";
            }
            write_text(target, serialize_stub(sg));
            log->info("{}: {} of {} nodes kept ({})", g.meta().sample_id, sg.graph.node_count(), g.node_count(),
                      to_string(sg.branch));
            return kOk;
        }

        if (*conf) {
            const auto graphs = load_dataset(dataset, manifest);
            ConfigureOptions opts;
            opts.gmn = s.gmn;
            opts.cluster = s.cluster;
            opts.jobs = jobs_of(s);
            opts.on_epoch = epoch_logger(log);
            log->info("configuring on {} graphs", graphs.size());
            const Registry reg = configure(graphs, opts, s.registry);
            print_summary(reg, out);
            return kOk;
        }

        if (*ident) {
            const Registry reg = load(s.registry);
            std::vector<CallGraph> graphs;
            std::vector<std::pair<std::size_t, std::string>> failures;  // position, message
            std::vector<std::string> names;
            for (const auto& in : inputs) {
                const auto files = fs::is_directory(in) ? list_graphs(in) : std::vector<fs::path>{in};
                for (const auto& f : files) names.push_back(f.string());
            }
            std::vector<std::optional<std::size_t>> slot(names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                try {
                    graphs.push_back(load_graph_file(names[i]));
                    slot[i] = graphs.size() - 1;
                } catch (const Error& e) {
                    failures.emplace_back(i, e.what());
                }
            }
            const Identifier identifier(reg, IdentifyOptions{s.unknown_on_zero_score, jobs_of(s)});
            const auto batch = identifier.identify_batch(graphs, flat);
            std::vector<IdentificationResult> results(names.size());
            for (std::size_t i = 0; i < names.size(); ++i) {
                if (slot[i]) results[i] = batch[*slot[i]];
            }
            for (const auto& [i, msg] : failures) {
                results[i].sample_id = names[i];
                results[i].error = msg;
                log->error("{}: {}", names[i], msg);
            }
            with_output(s, out, [&](std::ostream& o) { emit_results(results, s.format, o); });
            return failures.empty() ? kOk : kInputError;
        }

        if (*integ) {
            const Registry reg = load(s.registry);
            const auto graphs = load_dataset(new_dir, new_manifest);
            IntegrateOptions opts;
            opts.fine_tune = fine_tune;
            opts.old_per_packer = old_per_packer;
            gmn::GmnConfig training = reg.model.config;
            training.fine_tune_epochs = s.gmn.fine_tune_epochs;
            opts.training = training;
            opts.jobs = jobs_of(s);
            opts.on_epoch = epoch_logger(log);
            const Registry next = integrate(reg, graphs, opts);
            save(next, integrate_out.empty() ? s.registry : integrate_out);
            print_summary(next, out);
            return kOk;
        }

        if (*eval) {
            const Registry reg = load(s.registry);
            const auto graphs = load_dataset(test_dir, test_manifest);
            std::vector<std::string> truth;
            for (const auto& g : graphs) {
                if (!g.packer_label()) throw InvalidArgument(g.meta().sample_id + " has no label");
                truth.push_back(*g.packer_label());
            }
            const Identifier identifier(reg, IdentifyOptions{s.unknown_on_zero_score, jobs_of(s)});
            const auto results = identifier.identify_batch(graphs, eval_flat);
            std::vector<std::string> classes;
            for (const auto& [name, entry] : reg.packers) classes.push_back(name);
            const auto report = metrics::evaluate(results, truth, classes);
            with_output(s, out, [&](std::ostream& o) {
                o << (eval_format == "json" ? metrics::report_to_json(report) : metrics::report_to_csv(report));
            });
            return kOk;
        }

        if (*bench) {
            bench_opts.configure.gmn = s.gmn;
            bench_opts.configure.cluster = s.cluster;
            bench_opts.configure.jobs = jobs_of(s);
            bench_opts.jobs = jobs_of(s);
            const auto rows = metrics::bench_scalability(bench_opts);
            with_output(s, out, [&](std::ostream& o) {
                o << (bench_format == "csv" ? metrics::bench_to_csv(rows) : metrics::bench_to_table(rows));
            });
            return kOk;
        }

        if (*inspect) {
            const Registry reg = load(s.registry);
            out << "packer\tcluster\tsize\tmedoid\tthreshold\tlow_confidence\n";
            for (const auto& [name, entry] : reg.packers) {
                for (std::size_t c = 0; c < entry.clusters.size(); ++c) {
                    const auto& cl = entry.clusters[c];
                    char t[32];
                    std::snprintf(t, sizeof(t), "%.4f", cl.threshold);
                    out << name << '\t' << c << '\t' << cl.members.size() << '\t'
                        << reg.graphs.at(cl.medoid).graph.meta().sample_id << '\t' << t << '\t'
                        << (cl.low_confidence ? "yes" : "no") << '\n';
                }
            }
            return kOk;
        }

        if (*gen) {
            fs::create_directories(gen_dir);
            nlohmann::ordered_json labels = nlohmann::ordered_json::object();
            const auto families = synth::default_families(gen_first + gen_families, gen_seed);
            std::size_t written = 0;
            for (std::size_t f = gen_first; f < families.size(); ++f) {
                const auto graphs = synth::generate_family(families[f], gen_skip + gen_per_family);
                for (std::size_t i = gen_skip; i < graphs.size(); ++i) {
                    const auto& g = graphs[i];
                    write_text(fs::path(gen_dir) / (g.meta().sample_id + ".cg.json"), serialize_graph(g));
                    labels[g.meta().sample_id] = *g.packer_label();
                    ++written;
                }
            }
            write_text(fs::path(gen_dir) / "manifest.json", labels.dump(2) + "\n");
            log->info("wrote {} graphs to {}", written, gen_dir);
            return kOk;
        }
    } catch (const NumericError& e) {
        err << "error: " << e.what() << '\n';
        return kComputeError;
    } catch (const TrainingError& e) {
        err << "error: " << e.what() << '\n';
        return kComputeError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

}  // namespace stubmatch::cli
