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

#include <cmath>

#include "stubmatch/errors.hpp"
#include "stubmatch/gmn.hpp"
#include "stubmatch/random.hpp"

namespace stubmatch::gmn {

namespace {

AffineSlot place(std::size_t& cursor, std::size_t in, std::size_t out) {
    AffineSlot s;
    s.in = in;
    s.out = out;
    s.weight = cursor;
    cursor += in * out;
    s.bias = cursor;
    cursor += out;
    return s;
}

MlpSlot place_mlp(std::size_t& cursor, std::size_t in, std::size_t hidden, std::size_t out) {
    MlpSlot m;
    m.hidden = place(cursor, in, hidden);
    m.output = place(cursor, hidden, out);
    return m;
}

void fill_glorot(std::vector<double>& values, const AffineSlot& s, Rng& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    for (std::size_t i = 0; i < s.in * s.out; ++i) values[s.weight + i] = rng.uniform(-r, r);
}

}  // namespace

std::string_view to_string(LossForm f) {
    return f == LossForm::as_written ? "as_written" : "reinterpreted";
}

LossForm parse_loss_form(std::string_view s) {
    if (s == "reinterpreted") return LossForm::reinterpreted;
    if (s == "as_written") return LossForm::as_written;
    throw InvalidArgument("unknown loss form '" + std::string(s) + "'");
}

void validate(const GmnConfig& c) {
    if (c.node_hidden_dim == 0) throw InvalidArgument("node_hidden_dim must be positive");
    if (c.message_dim == 0) throw InvalidArgument("message_dim must be positive");
    if (c.propagation_rounds == 0) throw InvalidArgument("propagation_rounds must be positive");
    if (c.embedding_dim != kEmbeddingDim) throw InvalidArgument("embedding_dim must be 256");
    if (!(c.margin > 0.0 && c.margin <= 1.0)) throw InvalidArgument("margin must lie in (0, 1]");
    if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) {
        throw InvalidArgument("learning_rate must be finite and non-negative");
    }
    if (c.epochs == 0) throw InvalidArgument("epochs must be positive");
    if (c.batch_pairs == 0) throw InvalidArgument("batch_pairs must be positive");
    if (c.pairs_per_epoch == 0) throw InvalidArgument("pairs_per_epoch must be positive");
    if (!(c.positive_fraction >= 0.0 && c.positive_fraction <= 1.0)) {
        throw InvalidArgument("positive_fraction must lie in [0, 1]");
    }
}

ParamLayout make_layout(const GmnConfig& c) {
    const std::size_t h = c.node_hidden_dim;
    const std::size_t m = c.message_dim;
    const std::size_t e = c.embedding_dim;
    ParamLayout l;
    std::size_t cursor = 0;
    l.encoder = place_mlp(cursor, kFeatureCount, h, h);
    l.message = place_mlp(cursor, 2 * h, m, m);
    l.update = place_mlp(cursor, h + m + h, h, h);
    l.gate = place(cursor, h, e);
    l.transform = place(cursor, h, e);
    l.readout = place(cursor, e, e);
    l.total = cursor;
    return l;
}

GmnParams init_params(const GmnConfig& config) {
    validate(config);
    const ParamLayout l = make_layout(config);
    GmnParams p{config, std::vector<double>(l.total, 0.0)};
    Rng rng(derive_seed(config.seed, 0x1a17));
    for (const MlpSlot* m : {&l.encoder, &l.message, &l.update}) {
        fill_glorot(p.values, m->hidden, rng);
        fill_glorot(p.values, m->output, rng);
    }
    for (const AffineSlot* s : {&l.gate, &l.transform, &l.readout}) fill_glorot(p.values, *s, rng);
    return p;
}

}  // namespace stubmatch::gmn
