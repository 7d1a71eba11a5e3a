#include "apie/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace apie {

namespace {

void require_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractViolation(std::string(name) + " must lie in [0,1]");
    }
}

std::vector<const ParseOutcome*> valid_outcomes(const ProbeSet& probe) {
    std::vector<const ParseOutcome*> out;
    for (const auto& o : probe.outcomes) {
        if (o.valid()) out.push_back(&o);
    }
    return out;
}

double keyset_jaccard(const StructSignature& a, const StructSignature& b) {
    std::set<std::vector<std::string>> sa(a.keyset_profile.begin(), a.keyset_profile.end());
    std::set<std::vector<std::string>> sb(b.keyset_profile.begin(), b.keyset_profile.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& ks : sa) inter += sb.count(ks);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

ProbeSet make_probe_set(std::string sample_id, std::vector<std::string> generations, const SchemaSpec& schema,
                        const ParseOptions& options) {
    ProbeSet p;
    p.sample_id = std::move(sample_id);
    p.outcomes.reserve(generations.size());
    for (const auto& g : generations) p.outcomes.push_back(parse_output(g, schema, options));
    p.generations = std::move(generations);
    return p;
}

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(s[i]); };
    const auto cont = [&](std::size_t i, unsigned lo = 0x80, unsigned hi = 0xBF) {
        return i < s.size() && byte(i) >= lo && byte(i) <= hi;
    };
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned c = byte(i);
        if (c < 0x80) {
            out.push_back(c);
            i += 1;
        } else if (c >= 0xC2 && c <= 0xDF && cont(i + 1)) {
            out.push_back(((c & 0x1F) << 6) | (byte(i + 1) & 0x3F));
            i += 2;
        } else if (c >= 0xE0 && c <= 0xEF &&
                   cont(i + 1, c == 0xE0 ? 0xA0 : 0x80, c == 0xED ? 0x9F : 0xBF) && cont(i + 2)) {
            out.push_back(((c & 0x0F) << 12) | ((byte(i + 1) & 0x3F) << 6) | (byte(i + 2) & 0x3F));
            i += 3;
        } else if (c >= 0xF0 && c <= 0xF4 &&
                   cont(i + 1, c == 0xF0 ? 0x90 : 0x80, c == 0xF4 ? 0x8F : 0xBF) && cont(i + 2) && cont(i + 3)) {
            out.push_back(((c & 0x07) << 18) | ((byte(i + 1) & 0x3F) << 12) | ((byte(i + 2) & 0x3F) << 6) |
                          (byte(i + 3) & 0x3F));
            i += 4;
        } else {
            out.push_back(0xDC00 + c);
            i += 1;
        }
    }
    return out;
}

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
    // Shared prefix and suffix never contribute to the distance.
    std::size_t prefix = 0;
    while (prefix < a.size() && prefix < b.size() && a[prefix] == b[prefix]) ++prefix;
    a.remove_prefix(prefix);
    b.remove_prefix(prefix);
    while (!a.empty() && !b.empty() && a.back() == b.back()) {
        a.remove_suffix(1);
        b.remove_suffix(1);
    }
    if (a.size() < b.size()) std::swap(a, b);
    if (b.empty()) return a.size();

    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
            row[j] = std::min({up + 1, row[j - 1] + 1, sub});
            diag = up;
        }
    }
    return row[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    const auto ua = decode_utf8(a);
    const auto ub = decode_utf8(b);
    return levenshtein(std::u32string_view(ua), std::u32string_view(ub));
}

double pairwise_disagreement(const ProbeSet& probe, bool per_pair_normalize) {
    const std::size_t k = probe.generations.size();
    if (k < 2) throw ContractViolation("pairwise_disagreement requires k >= 2");
    std::vector<std::u32string> decoded;
    decoded.reserve(k);
    for (const auto& g : probe.generations) decoded.push_back(decode_utf8(g));
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t l = j + 1; l < k; ++l) {
            const auto d = static_cast<double>(levenshtein(decoded[j], decoded[l]));
            if (per_pair_normalize) {
                const auto longest = std::max(decoded[j].size(), decoded[l].size());
                total += longest == 0 ? 0.0 : d / static_cast<double>(longest);
            } else {
                total += d;
            }
        }
    }
    return total / (static_cast<double>(k * (k - 1)) / 2.0);
}

double parsing_failure_rate(const ProbeSet& probe) {
    const std::size_t k = probe.outcomes.size();
    if (k == 0) throw ContractViolation("parsing_failure_rate requires k >= 1");
    const auto failed = std::count_if(probe.outcomes.begin(), probe.outcomes.end(),
                                      [](const ParseOutcome& o) { return !o.valid(); });
    return static_cast<double>(failed) / static_cast<double>(k);
}

double structural_disagreement(const ProbeSet& probe) {
    const auto valid = valid_outcomes(probe);
    if (valid.size() < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < valid.size(); ++j) {
        for (std::size_t l = j + 1; l < valid.size(); ++l) {
            const auto& a = structural_signature(*valid[j]);
            const auto& b = structural_signature(*valid[l]);
            const double len_a = static_cast<double>(a.length);
            const double len_b = static_cast<double>(b.length);
            const double len_term = std::abs(len_a - len_b) / std::max({len_a, len_b, 1.0});
            total += 0.5 * (1.0 - keyset_jaccard(a, b)) + 0.5 * len_term;
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

double format_uncertainty(const ProbeSet& probe, double lambda_fail, double lambda_struct) {
    if (lambda_fail < 0 || lambda_struct < 0 || std::abs(lambda_fail + lambda_struct - 1.0) > 1e-9) {
        throw ConfigError("invalid_lambda", "format weights must be non-negative and sum to 1");
    }
    return lambda_fail * parsing_failure_rate(probe) + lambda_struct * structural_disagreement(probe);
}

double jaccard_similarity(const ExtractionSet& a, const ExtractionSet& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : a) inter += b.contains(t) ? 1 : 0;
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double content_uncertainty(const ProbeSet& probe) {
    const auto valid = valid_outcomes(probe);
    if (valid.empty()) return 1.0;
    if (valid.size() == 1) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t j = 0; j < valid.size(); ++j) {
        for (std::size_t l = j + 1; l < valid.size(); ++l) {
            total += jaccard_similarity(*valid[j]->extractions, *valid[l]->extractions);
            ++pairs;
        }
    }
    return 1.0 - total / static_cast<double>(pairs);
}

std::vector<double> minmax_normalize(std::span<const double> values) {
    if (values.empty()) throw ContractViolation("minmax_normalize requires a non-empty list");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    std::vector<double> out(values.size(), 0.0);
    if (range > 0) {
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
    }
    return out;
}

double total_uncertainty(double u_d_norm, double u_f_norm, double u_c_norm, const Weights& w) {
    require_unit(u_d_norm, "u_d_norm");
    require_unit(u_f_norm, "u_f_norm");
    require_unit(u_c_norm, "u_c_norm");
    if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || std::abs(w.alpha + w.beta + w.gamma - 1.0) > 1e-9) {
        throw ContractViolation("weights must be non-negative and pre-normalized to sum 1");
    }
    const double total = w.alpha * u_d_norm + w.beta * u_f_norm + w.gamma * u_c_norm;
    return std::clamp(total, 0.0, 1.0);
}

ScoringOptions scoring_options(const RunConfig& cfg) {
    return ScoringOptions{cfg.normalize_levenshtein_per_pair, cfg.lambda_fail, cfg.lambda_struct};
}

UncertaintyScores score_probe(const ProbeSet& probe, const ScoringOptions& options) {
    if (probe.generations.size() != probe.outcomes.size()) {
        throw ContractViolation("probe set generations and outcomes are misaligned");
    }
    UncertaintyScores s;
    s.sample_id = probe.sample_id;
    s.u_d_raw = pairwise_disagreement(probe, options.per_pair_normalize);
    s.r_fail = parsing_failure_rate(probe);
    s.s_dis = structural_disagreement(probe);
    s.u_f_raw = format_uncertainty(probe, options.lambda_fail, options.lambda_struct);
    s.u_c_raw = content_uncertainty(probe);
    s.k_valid = static_cast<int>(valid_outcomes(probe).size());
    return s;
}

void normalize_pool(std::vector<UncertaintyScores>& pool, const Weights& weights) {
    std::vector<double> d, f, c;
    d.reserve(pool.size());
    f.reserve(pool.size());
    c.reserve(pool.size());
    for (const auto& s : pool) {
        d.push_back(s.u_d_raw);
        f.push_back(s.u_f_raw);
        c.push_back(s.u_c_raw);
    }
    const auto dn = minmax_normalize(d);
    const auto fn = minmax_normalize(f);
    const auto cn = minmax_normalize(c);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        pool[i].u_d_norm = dn[i];
        pool[i].u_f_norm = fn[i];
        pool[i].u_c_norm = cn[i];
        pool[i].u_total = total_uncertainty(dn[i], fn[i], cn[i], weights);
    }
}

std::vector<UncertaintyScores> score_pool(std::span<const ProbeSet> probes, const Weights& weights,
                                          const ScoringOptions& options) {
    std::vector<UncertaintyScores> out;
    out.reserve(probes.size());
    for (const auto& p : probes) out.push_back(score_probe(p, options));
    normalize_pool(out, weights);
    return out;
}

nlohmann::ordered_json scores_to_json(const UncertaintyScores& s) {
    nlohmann::ordered_json j;
    j["id"] = s.sample_id;
    j["u_d_raw"] = s.u_d_raw;
    j["r_fail"] = s.r_fail;
    j["s_dis"] = s.s_dis;
    j["u_f_raw"] = s.u_f_raw;
    j["u_c_raw"] = s.u_c_raw;
    j["k_valid"] = s.k_valid;
    j["u_d"] = s.u_d_norm;
    j["u_f"] = s.u_f_norm;
    j["u_c"] = s.u_c_norm;
    j["u_total"] = s.u_total;
    return j;
}

UncertaintyScores scores_from_json(const nlohmann::json& j) {
    UncertaintyScores s;
    s.sample_id = j.at("id").get<std::string>();
    s.u_d_raw = j.at("u_d_raw").get<double>();
    s.r_fail = j.at("r_fail").get<double>();
    s.s_dis = j.at("s_dis").get<double>();
    s.u_f_raw = j.at("u_f_raw").get<double>();
    s.u_c_raw = j.at("u_c_raw").get<double>();
    s.k_valid = j.at("k_valid").get<int>();
    s.u_d_norm = j.at("u_d").get<double>();
    s.u_f_norm = j.at("u_f").get<double>();
    s.u_c_norm = j.at("u_c").get<double>();
    s.u_total = j.at("u_total").get<double>();
    return s;
}

}  // namespace apie
