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

// Weights blob layout, all integers little-endian:
//   8 bytes   magic "SMGMNW\0\0"
//   u32       format version
//   u32       header length L
//   L bytes   GmnConfig as JSON
//   u64       parameter count N
//   N * 8     IEEE-754 doubles
//   32 bytes  SHA-256 of everything above

#include <bit>
#include <cstring>

#include "json.hpp"
#include "stubmatch/errors.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/hash.hpp"

namespace stubmatch::gmn {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'G', 'M', 'N', 'W', '\0', '\0'};
constexpr std::uint32_t kBlobVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::string_view take(std::size_t n) {
        if (data_.size() - pos_ < n) throw CorruptionError("model blob is truncated");
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint64_t u(int bytes) {
        const auto raw = take(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i])) << (8 * i);
        return v;
    }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string config_to_json(const GmnConfig& c) {
    nlohmann::ordered_json j;
    j["node_hidden_dim"] = c.node_hidden_dim;
    j["message_dim"] = c.message_dim;
    j["propagation_rounds"] = c.propagation_rounds;
    j["embedding_dim"] = c.embedding_dim;
    j["margin"] = c.margin;
    j["learning_rate"] = c.learning_rate;
    j["epochs"] = c.epochs;
    j["batch_pairs"] = c.batch_pairs;
    j["pairs_per_epoch"] = c.pairs_per_epoch;
    j["fine_tune_epochs"] = c.fine_tune_epochs;
    j["positive_fraction"] = c.positive_fraction;
    j["loss_form"] = std::string(to_string(c.loss_form));
    j["seed"] = c.seed;
    return j.dump();
}

GmnConfig config_from_json(std::string_view text) {
    GmnConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.node_hidden_dim = j.at("node_hidden_dim").get<std::size_t>();
        c.message_dim = j.at("message_dim").get<std::size_t>();
        c.propagation_rounds = j.at("propagation_rounds").get<std::size_t>();
        c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
        c.margin = j.at("margin").get<double>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.batch_pairs = j.at("batch_pairs").get<std::size_t>();
        c.pairs_per_epoch = j.at("pairs_per_epoch").get<std::size_t>();
        c.fine_tune_epochs = j.at("fine_tune_epochs").get<std::size_t>();
        c.positive_fraction = j.at("positive_fraction").get<double>();
        c.loss_form = parse_loss_form(j.at("loss_form").get<std::string>());
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    validate(c);
    return c;
}

std::string serialize_params(const GmnParams& params) {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kBlobVersion);
    const std::string header = config_to_json(params.config);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    put_u64(out, params.values.size());
    for (double v : params.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
    const auto digest = sha256(out);
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    return out;
}

GmnParams parse_params(std::string_view blob) {
    if (blob.size() < sizeof(kMagic) + 32 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CorruptionError("not a model blob");
    }
    const auto body = blob.substr(0, blob.size() - 32);
    const auto digest = sha256(body);
    if (std::memcmp(digest.data(), blob.data() + body.size(), digest.size()) != 0) {
        throw CorruptionError("model blob hash mismatch");
    }
    Reader r(body);
    r.take(sizeof(kMagic));
    const auto version = static_cast<std::uint32_t>(r.u(4));
    if (version != kBlobVersion) {
        throw VersionError("model blob version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kBlobVersion) + ")");
    }
    const auto header_len = static_cast<std::size_t>(r.u(4));
    GmnParams p;
    p.config = config_from_json(r.take(header_len));
    const auto count = static_cast<std::size_t>(r.u(8));
    if (count != make_layout(p.config).total) throw CorruptionError("model blob parameter count mismatch");
    p.values.resize(count);
    for (auto& v : p.values) v = std::bit_cast<double>(r.u(8));
    return p;
}

}  // namespace stubmatch::gmn
