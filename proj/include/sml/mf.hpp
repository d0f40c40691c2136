// Matrix-factorization recommender: scoring, pointwise log loss with 1:1
// negative sampling, and loss gradients with respect to the embedding rows.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "sml/activations.hpp"
#include "sml/matrix.hpp"
#include "sml/rng.hpp"

namespace sml {

using EntityId = std::uint32_t;

struct Interaction {
    EntityId user = 0;
    EntityId item = 0;
    std::int64_t timestamp = 0;
};

// One training example: a positive (label 1) or sampled negative (label 0).
struct Example {
    EntityId user = 0;
    EntityId item = 0;
    double label = 1.0;
};

struct Embeddings {
    DenseMatrix P;  // n_users x d
    DenseMatrix Q;  // n_items x d

    std::size_t n_users() const { return P.rows; }
    std::size_t n_items() const { return Q.rows; }
    std::size_t dim() const { return P.cols; }

    bool operator==(const Embeddings& o) const = default;
};

// Per-user sets of items already interacted with, cumulative over periods.
using ObservedSets = std::vector<std::unordered_set<EntityId>>;

inline double score(const Embeddings& emb, EntityId user, EntityId item) {
    if (user >= emb.n_users())
        throw std::invalid_argument("score: user id " + std::to_string(user) + " out of range");
    if (item >= emb.n_items())
        throw std::invalid_argument("score: item id " + std::to_string(item) + " out of range");
    return dot(emb.P.row(user), emb.Q.row(item));
}

// Exactly one uniformly-drawn unobserved item per positive, by rejection
// against the user's observed set. Deterministic given the stream.
inline std::vector<Example> sample_negatives(const std::vector<Interaction>& positives,
                                             const ObservedSets& observed,
                                             std::size_t n_items, RngStream& rng) {
    std::vector<Example> negatives;
    negatives.reserve(positives.size());
    for (const Interaction& pos : positives) {
        const auto& seen = observed.at(pos.user);
        if (seen.size() >= n_items)
            throw std::runtime_error("sample_negatives: user " + std::to_string(pos.user) +
                                     " has observed the whole item universe");
        EntityId item;
        do {
            item = static_cast<EntityId>(rng.below(n_items));
        } while (seen.count(item) > 0);
        negatives.push_back({pos.user, item, 0.0});
    }
    return negatives;
}

// Positives first (in input order, label 1), then their negatives (label 0).
inline std::vector<Example> make_training_examples(const std::vector<Interaction>& positives,
                                                   const ObservedSets& observed,
                                                   std::size_t n_items, RngStream& rng) {
    std::vector<Example> examples;
    examples.reserve(positives.size() * 2);
    for (const Interaction& pos : positives) examples.push_back({pos.user, pos.item, 1.0});
    auto negatives = sample_negatives(positives, observed, n_items, rng);
    examples.insert(examples.end(), negatives.begin(), negatives.end());
    return examples;
}

// -sum_pos log sigmoid(y) - sum_neg log(1 - sigmoid(y)), stable form.
inline double log_loss(const Embeddings& emb, const std::vector<Example>& examples) {
    double loss = 0.0;
    for (const Example& ex : examples) {
        double y = score(emb, ex.user, ex.item);
        loss -= ex.label > 0.5 ? log_sigmoid(y) : log_one_minus_sigmoid(y);
    }
    return loss;
}

// Sparse row-indexed gradients; rows absent from the map have zero gradient.
// std::map keeps the row order deterministic.
struct RowGrads {
    std::map<std::size_t, std::vector<double>> rows;

    std::vector<double>& at(std::size_t row, std::size_t d) {
        auto it = rows.find(row);
        if (it == rows.end()) it = rows.emplace(row, std::vector<double>(d, 0.0)).first;
        return it->second;
    }

    bool empty() const { return rows.empty(); }
};

struct EmbeddingGrads {
    RowGrads p;  // by user row
    RowGrads q;  // by item row
};

// dL/dp_u = sum_i (sigmoid(y_ui) - label) * q_i, and symmetrically for q_i.
// Accumulation follows example order, so results are reproducible.
inline EmbeddingGrads log_loss_grad(const Embeddings& emb, const std::vector<Example>& examples) {
    EmbeddingGrads grads;
    std::size_t d = emb.dim();
    for (const Example& ex : examples) {
        double s = sigmoid(score(emb, ex.user, ex.item)) - ex.label;
        auto qi = emb.Q.row(ex.item);
        auto pu = emb.P.row(ex.user);
        auto& gp = grads.p.at(ex.user, d);
        auto& gq = grads.q.at(ex.item, d);
        for (std::size_t j = 0; j < d; ++j) {
            gp[j] += s * qi[j];
            gq[j] += s * pu[j];
        }
    }
    return grads;
}

// Appends freshly initialized Gaussian(0, 0.01^2) rows; existing rows are
// preserved bitwise. New user rows are drawn before new item rows.
inline Embeddings grow(const Embeddings& emb, std::size_t new_user_count,
                       std::size_t new_item_count, RngStream& rng) {
    if (new_user_count < emb.n_users() || new_item_count < emb.n_items())
        throw std::invalid_argument("grow: embedding tables cannot shrink");
    std::size_t d = emb.dim();
    Embeddings out;
    out.P = DenseMatrix(new_user_count, d);
    out.Q = DenseMatrix(new_item_count, d);
    std::copy(emb.P.data.begin(), emb.P.data.end(), out.P.data.begin());
    std::copy(emb.Q.data.begin(), emb.Q.data.end(), out.Q.data.begin());
    for (std::size_t r = emb.n_users(); r < new_user_count; ++r)
        for (double& v : out.P.row(r)) v = rng.normal(0.0, 0.01);
    for (std::size_t r = emb.n_items(); r < new_item_count; ++r)
        for (double& v : out.Q.row(r)) v = rng.normal(0.0, 0.01);
    return out;
}

inline Embeddings make_embeddings(std::size_t n_users, std::size_t n_items, std::size_t d,
                                  RngStream& rng) {
    Embeddings empty;
    empty.P = DenseMatrix(0, d);
    empty.Q = DenseMatrix(0, d);
    return grow(empty, n_users, n_items, rng);
}

}  // namespace sml
