#include "apie/selector.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include "apie/annotation.hpp"

namespace apie {

namespace {

void check_n(std::size_t pool_size, int n) {
    if (pool_size == 0) throw DataError("SelectionError", "empty_pool: nothing to select from");
    if (n < 1) throw DataError("SelectionError", "n must be >= 1");
    if (static_cast<std::size_t>(n) > pool_size) {
        throw DataError("SelectionError", "n_exceeds_pool: n=" + std::to_string(n) + " but pool has " +
                                              std::to_string(pool_size) + " samples");
    }
}

template <typename Key>
std::vector<std::string> top_n(std::span<const UncertaintyScores> pool, int n, Key key) {
    std::vector<const UncertaintyScores*> order;
    order.reserve(pool.size());
    for (const auto& s : pool) order.push_back(&s);
    std::sort(order.begin(), order.end(), [&](const UncertaintyScores* a, const UncertaintyScores* b) {
        const double ka = key(*a);
        const double kb = key(*b);
        if (ka != kb) return ka > kb;
        return a->sample_id < b->sample_id;
    });
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back(order[static_cast<std::size_t>(i)]->sample_id);
    return ids;
}

SelectionResult scored_selection(Strategy strategy, std::span<const UncertaintyScores> pool, std::vector<std::string> ids) {
    SelectionResult r;
    r.strategy = strategy;
    r.selected_ids = std::move(ids);
    for (const auto& s : pool) r.scores.emplace(s.sample_id, s);
    if (r.scores.size() != pool.size()) throw DataError("SelectionError", "duplicate sample ids in pool scores");
    return r;
}

std::uint64_t bounded(std::mt19937_64& gen, std::uint64_t bound) {
    // Rejection sampling keeps the draw unbiased and platform independent.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = gen();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::apie: return "apie";
        case Strategy::zsl: return "zsl";
        case Strategy::rsl: return "rsl";
        case Strategy::kd_sort: return "kd_sort";
        case Strategy::active_prompt: return "active_prompt";
    }
    return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
    for (auto st : {Strategy::apie, Strategy::zsl, Strategy::rsl, Strategy::kd_sort, Strategy::active_prompt}) {
        if (to_string(st) == s) return st;
    }
    throw ConfigError("invalid_strategy", "unknown strategy '" + std::string(s) + "'");
}

SelectionResult rank_and_select(std::span<const UncertaintyScores> pool_scores, int n) {
    check_n(pool_scores.size(), n);
    auto ids = top_n(pool_scores, n, [](const UncertaintyScores& s) { return s.u_total; });
    return scored_selection(Strategy::apie, pool_scores, std::move(ids));
}

SelectionResult select_active_prompt(std::span<const UncertaintyScores> pool_scores, int n) {
    check_n(pool_scores.size(), n);
    auto ids = top_n(pool_scores, n, [](const UncertaintyScores& s) { return s.u_d_norm; });
    auto r = scored_selection(Strategy::active_prompt, pool_scores, std::move(ids));
    r.weights = Weights{1.0, 0.0, 0.0};
    return r;
}

std::vector<std::size_t> seeded_sample_indices(std::size_t size, std::size_t n, std::int64_t seed) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 gen(static_cast<std::uint64_t>(seed));
    for (std::size_t i = 0; i < n && i < size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded(gen, size - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(std::min(n, size));
    return idx;
}

SelectionResult select_random(std::span<const Sample> pool, int n, std::int64_t seed) {
    check_n(pool.size(), n);
    SelectionResult r;
    r.strategy = Strategy::rsl;
    r.seed = seed;
    for (auto i : seeded_sample_indices(pool.size(), static_cast<std::size_t>(n), seed)) {
        r.selected_ids.push_back(pool[i].id);
    }
    return r;
}

double knowledge_density(const Sample& s) {
    std::size_t tokens = 0;
    std::size_t capitalized = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < s.text.size(); ++i) {
        const char c = s.text[i];
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_token) {
            ++tokens;
            if (c >= 'A' && c <= 'Z') ++capitalized;
        }
        in_token = !space;
    }
    if (tokens == 0) return 0.0;
    const double numerator = s.gold ? static_cast<double>(s.gold->size()) : static_cast<double>(capitalized);
    return numerator / static_cast<double>(tokens);
}

SelectionResult select_kd_sort(std::span<const Sample> pool, int n) {
    check_n(pool.size(), n);
    std::vector<std::pair<double, const Sample*>> ranked;
    for (const auto& s : pool) ranked.emplace_back(knowledge_density(s), &s);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->id < b.second->id;
    });
    SelectionResult r;
    r.strategy = Strategy::kd_sort;
    for (int i = 0; i < n; ++i) r.selected_ids.push_back(ranked[static_cast<std::size_t>(i)].second->id);
    return r;
}

SelectionResult select_zero_shot() {
    SelectionResult r;
    r.strategy = Strategy::zsl;
    return r;
}

std::vector<Exemplar> resolve_labels(const SelectionResult& selection, std::span<const Sample> pool, LabelMode mode,
                                     const AnnotationWait& wait) {
    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& s : pool) by_id.emplace(s.id, &s);
    const auto sample_for = [&](const std::string& id) -> const Sample& {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("UnknownSample", "selected id '" + id + "' is not in the pool");
        return *it->second;
    };

    std::vector<Exemplar> out;
    if (mode == LabelMode::gold_lookup) {
        for (const auto& id : selection.selected_ids) {
            const Sample& s = sample_for(id);
            if (!s.gold) throw DataError("MissingGold", "sample '" + id + "' has no gold labels");
            out.push_back(Exemplar{s.id, s.text, *s.gold});
        }
        return out;
    }

    if (!wait.schema) throw ContractViolation("annotation_service mode needs a schema");
    const auto start = std::chrono::steady_clock::now();
    for (;;) {
        const auto labels = replay_annotation_log(wait.store_log, *wait.schema);
        std::vector<std::string> pending;
        for (const auto& id : selection.selected_ids) {
            if (!labels.count(id)) pending.push_back(id);
        }
        if (pending.empty()) {
            for (const auto& id : selection.selected_ids) {
                out.push_back(Exemplar{id, sample_for(id).text, labels.at(id).label});
            }
            return out;
        }
        if (std::chrono::steady_clock::now() - start >= wait.deadline) {
            std::string list;
            for (const auto& id : pending) list += (list.empty() ? "" : ", ") + id;
            throw DataError("AnnotationTimeout", "still unlabeled: " + list);
        }
        std::this_thread::sleep_for(wait.poll_interval);
    }
}

nlohmann::ordered_json selection_manifest(const SelectionResult& r) {
    nlohmann::ordered_json j;
    j["strategy"] = to_string(r.strategy);
    j["seed"] = r.seed;
    j["n"] = r.selected_ids.size();
    j["selected_ids"] = r.selected_ids;
    nlohmann::ordered_json w;
    w["alpha"] = r.weights.alpha;
    w["beta"] = r.weights.beta;
    w["gamma"] = r.weights.gamma;
    j["weights"] = std::move(w);
    return j;
}

SelectionResult selection_from_manifest(const nlohmann::json& j) {
    try {
        SelectionResult r;
        r.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        r.seed = j.at("seed").get<std::int64_t>();
        r.selected_ids = j.at("selected_ids").get<std::vector<std::string>>();
        const auto& w = j.at("weights");
        r.weights = Weights{w.at("alpha").get<double>(), w.at("beta").get<double>(), w.at("gamma").get<double>()};
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("MalformedSelection", e.what());
    }
}

}  // namespace apie
