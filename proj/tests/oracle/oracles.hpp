#pragma once
// Deliberately naive reference implementations used to cross-check the
// library. Nothing here calls into apie.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace oracle {

/// Full (m+1)x(n+1) edit-distance table, no shortcuts.
inline std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
    std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
    for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1, sub});
        }
    }
    return t[a.size()][b.size()];
}

inline std::string utf8_encode(const std::u32string& s) {
    std::string out;
    for (char32_t c : s) {
        if (c < 0x80) {
            out += static_cast<char>(c);
        } else if (c < 0x800) {
            out += static_cast<char>(0xC0 | (c >> 6));
            out += static_cast<char>(0x80 | (c & 0x3F));
        } else if (c < 0x10000) {
            out += static_cast<char>(0xE0 | (c >> 12));
            out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (c & 0x3F));
        } else {
            out += static_cast<char>(0xF0 | (c >> 18));
            out += static_cast<char>(0x80 | ((c >> 12) & 0x3F));
            out += static_cast<char>(0x80 | ((c >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (c & 0x3F));
        }
    }
    return out;
}

/// One generation as the oracle sees it: the raw text, and for a valid parse
/// the tuple keys, list length and per-object key-sets.
struct Gen {
    std::u32string text;
    bool valid = false;
    std::set<std::string> tuples;
    std::size_t length = 0;
    std::vector<std::set<std::string>> keysets;
};

inline double set_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::set<std::string> u = a;
    u.insert(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& x : a) {
        if (b.count(x)) ++inter;
    }
    return static_cast<double>(inter) / static_cast<double>(u.size());
}

inline double disagreement(const std::vector<Gen>& g) {
    double sum = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = i + 1; j < g.size(); ++j) {
            sum += static_cast<double>(levenshtein(g[i].text, g[j].text));
            pairs += 1;
        }
    }
    return sum / pairs;
}

inline double fail_rate(const std::vector<Gen>& g) {
    double failed = 0;
    for (const auto& x : g) failed += x.valid ? 0 : 1;
    return failed / static_cast<double>(g.size());
}

inline std::vector<const Gen*> valid_only(const std::vector<Gen>& g) {
    std::vector<const Gen*> v;
    for (const auto& x : g) {
        if (x.valid) v.push_back(&x);
    }
    return v;
}

inline std::set<std::string> keyset_strings(const Gen& g) {
    std::set<std::string> out;
    for (const auto& ks : g.keysets) {
        std::string joined;
        for (const auto& k : ks) joined += k + "|";
        out.insert(joined);
    }
    return out;
}

inline double structural(const std::vector<Gen>& g) {
    const auto v = valid_only(g);
    if (v.size() < 2) return 0.0;
    double sum = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            const double la = static_cast<double>(v[i]->length);
            const double lb = static_cast<double>(v[j]->length);
            const double denom = std::max({la, lb, 1.0});
            const double diff = la > lb ? la - lb : lb - la;
            sum += 0.5 * (1.0 - set_jaccard(keyset_strings(*v[i]), keyset_strings(*v[j]))) + 0.5 * (diff / denom);
            pairs += 1;
        }
    }
    return sum / pairs;
}

inline double format(const std::vector<Gen>& g, double lf = 0.5, double ls = 0.5) {
    return lf * fail_rate(g) + ls * structural(g);
}

inline double content(const std::vector<Gen>& g) {
    const auto v = valid_only(g);
    if (v.empty()) return 1.0;
    if (v.size() == 1) return 0.0;
    double sum = 0;
    double pairs = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            sum += set_jaccard(v[i]->tuples, v[j]->tuples);
            pairs += 1;
        }
    }
    return 1.0 - sum / pairs;
}

inline std::vector<double> minmax(const std::vector<double>& v) {
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v) out.push_back(hi == lo ? 0.0 : (x - lo) / (hi - lo));
    return out;
}

/// Indices of the n largest keys, ties by ascending name.
inline std::vector<std::string> top_n(const std::map<std::string, double>& keys, std::size_t n) {
    std::vector<std::pair<std::string, double>> v(keys.begin(), keys.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n && i < v.size(); ++i) out.push_back(v[i].first);
    return out;
}

}  // namespace oracle
