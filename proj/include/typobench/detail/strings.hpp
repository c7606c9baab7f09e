#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace typobench::detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

/// Trim plus internal whitespace runs collapsed to single spaces.
/// This is the display-form normalization for class names.
inline std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_ws = true; // swallows leading whitespace
    for (char c : s) {
        if (is_space(c)) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out.push_back(' ');
            out.push_back(c);
            in_ws = false;
        }
    }
    return out;
}

/// ASCII case-fold. Class vocabularies and model answers are compared
/// through this; non-ASCII bytes pass through unchanged.
inline std::string casefold(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Equality key for class names: collapse whitespace, then case-fold.
inline std::string class_key(std::string_view s) { return casefold(collapse_ws(s)); }

inline bool iequals(std::string_view a, std::string_view b) {
    return casefold(a) == casefold(b);
}

inline bool icontains(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return false;
    return casefold(haystack).find(casefold(needle)) != std::string::npos;
}

inline std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : s) {
        if (is_space(c)) {
            if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

} // namespace typobench::detail
