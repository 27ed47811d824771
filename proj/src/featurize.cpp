#include "fieldalign/featurize.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include "fieldalign/error.hpp"
#include "fieldalign/text.hpp"

namespace fieldalign {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& msg) {
    throw Error(Module::featurize, kind, msg);
}

}  // namespace

TokenizationScheme TokenizationScheme::parse(std::string_view text) {
    // e{0,1}-w{0,1}-g{0..9}
    const bool well_formed = text.size() == 8 && text[0] == 'e' && text[2] == '-' &&
                             text[3] == 'w' && text[5] == '-' && text[6] == 'g' &&
                             (text[1] == '0' || text[1] == '1') &&
                             (text[4] == '0' || text[4] == '1') && text[7] >= '0' &&
                             text[7] <= '9';
    if (!well_formed) {
        fail(ErrorKind::usage, "malformed scheme '" + std::string(text) +
                                   "' (expected e{0,1}-w{0,1}-g{0..9}, e.g. e1-w1-g2)");
    }
    TokenizationScheme s{text[1] == '1', text[4] == '1', static_cast<unsigned>(text[7] - '0')};
    s.validate();
    return s;
}

std::string TokenizationScheme::to_string() const {
    std::string out = "e0-w0-g0";
    out[1] = use_nul_token ? '1' : '0';
    out[4] = use_words ? '1' : '0';
    out[7] = static_cast<char>('0' + max_gram);
    return out;
}

void TokenizationScheme::validate() const {
    if (max_gram > 9) fail(ErrorKind::usage, "max n-gram length must be in 0..9");
    if (!use_nul_token && !use_words && max_gram == 0) {
        fail(ErrorKind::usage, "scheme e0-w0-g0 represents nothing");
    }
}

std::string_view to_string(FeatureKind k) noexcept {
    switch (k) {
        case FeatureKind::word: return "word";
        case FeatureKind::gram: return "gram";
        case FeatureKind::nul: return "nul";
    }
    return "?";
}

std::size_t FeatureKeyHash::operator()(const FeatureKey& k) const noexcept {
    return std::hash<std::string>{}(k.text) * 3 + static_cast<std::size_t>(k.kind);
}

FeatureDictionary::FeatureDictionary(const FeatureDictionary& other) {
    std::lock_guard lock(other.mutex_);
    ids_ = other.ids_;
    keys_ = other.keys_;
    scheme_ = other.scheme_;
}

FeatureDictionary& FeatureDictionary::operator=(const FeatureDictionary& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        ids_ = other.ids_;
        keys_ = other.keys_;
        scheme_ = other.scheme_;
    }
    return *this;
}

FeatureDictionary::FeatureDictionary(FeatureDictionary&& other) noexcept
    : ids_(std::move(other.ids_)), keys_(std::move(other.keys_)), scheme_(other.scheme_) {}

FeatureDictionary& FeatureDictionary::operator=(FeatureDictionary&& other) noexcept {
    ids_ = std::move(other.ids_);
    keys_ = std::move(other.keys_);
    scheme_ = other.scheme_;
    return *this;
}

std::size_t FeatureDictionary::size() const {
    std::lock_guard lock(mutex_);
    return keys_.size();
}

std::optional<FeatureId> FeatureDictionary::find(const FeatureKey& key) const {
    std::lock_guard lock(mutex_);
    const auto it = ids_.find(key);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

FeatureId FeatureDictionary::intern(const FeatureKey& key) {
    std::lock_guard lock(mutex_);
    const auto [it, inserted] = ids_.try_emplace(key, static_cast<FeatureId>(keys_.size()));
    if (inserted) keys_.push_back(key);
    return it->second;
}

const FeatureKey& FeatureDictionary::key(FeatureId id) const {
    std::lock_guard lock(mutex_);
    if (id >= keys_.size()) fail(ErrorKind::lookup, "feature id out of range");
    return keys_[id];
}

void FeatureDictionary::bind_scheme(const TokenizationScheme& scheme) {
    std::lock_guard lock(mutex_);
    if (!scheme_) {
        scheme_ = scheme;
    } else if (*scheme_ != scheme) {
        fail(ErrorKind::config, "dictionary built with scheme " + scheme_->to_string() +
                                    " cannot be used with " + scheme.to_string());
    }
}

void FeatureDictionary::write(std::ostream& out) const {
    std::lock_guard lock(mutex_);
    for (std::size_t id = 0; id < keys_.size(); ++id) {
        out << to_string(keys_[id].kind) << '\t' << text::escape(keys_[id].text) << '\t' << id
            << '\n';
    }
}

FeatureDictionary FeatureDictionary::read(std::istream& in) {
    FeatureDictionary dict;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            fail(ErrorKind::parse, "dictionary line " + std::to_string(lineno) + ": expected 3 fields");
        }
        const auto kind_text = std::string_view(line).substr(0, t1);
        FeatureKind kind;
        if (kind_text == "word") kind = FeatureKind::word;
        else if (kind_text == "gram") kind = FeatureKind::gram;
        else if (kind_text == "nul") kind = FeatureKind::nul;
        else fail(ErrorKind::parse, "dictionary line " + std::to_string(lineno) + ": bad kind");
        std::string feature;
        try {
            feature = text::unescape(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
        } catch (const std::invalid_argument& e) {
            fail(ErrorKind::parse, "dictionary line " + std::to_string(lineno) + ": " + e.what());
        }
        const auto id = std::stoul(line.substr(t2 + 1));
        if (id != dict.keys_.size()) {
            fail(ErrorKind::parse, "dictionary line " + std::to_string(lineno) + ": ids not dense");
        }
        dict.intern({kind, std::move(feature)});
    }
    return dict;
}

bool FeatureDictionary::operator==(const FeatureDictionary& other) const {
    if (this == &other) return true;
    std::scoped_lock lock(mutex_, other.mutex_);
    return keys_ == other.keys_ && scheme_ == other.scheme_;
}

double FeatureVector::squared_norm() const noexcept {
    double s = 0.0;
    for (const auto& [id, v] : entries) s += v * v;
    return s;
}

double FeatureVector::total() const noexcept {
    double s = 0.0;
    for (const auto& [id, v] : entries) s += v;
    return s;
}

std::vector<std::pair<FeatureKey, double>> feature_counts(std::string_view cell,
                                                          const TokenizationScheme& scheme) {
    std::vector<std::pair<FeatureKey, double>> out;
    if (is_nul(cell)) {
        if (scheme.use_nul_token) out.push_back({{FeatureKind::nul, "NUL"}, 1.0});
        return out;
    }
    // Order of first appearance is preserved so dictionary ids are stable.
    std::map<std::pair<FeatureKind, std::string_view>, std::size_t> slot;
    auto add = [&](FeatureKind kind, std::string_view t) {
        const auto [it, inserted] = slot.try_emplace({kind, t}, out.size());
        if (inserted) {
            out.push_back({{kind, std::string(t)}, 1.0});
        } else {
            out[it->second].second += 1.0;
        }
    };

    const auto cps = text::decode(cell);
    if (scheme.use_words) {
        std::size_t i = 0;
        while (i < cps.size()) {
            while (i < cps.size() && text::is_unicode_space(cps[i].value)) ++i;
            const auto start = i;
            while (i < cps.size() && !text::is_unicode_space(cps[i].value)) ++i;
            if (i > start) {
                const auto b = cps[start].offset;
                const auto e = cps[i - 1].offset + cps[i - 1].length;
                add(FeatureKind::word, cell.substr(b, e - b));
            }
        }
    }
    for (std::size_t k = 1; k <= scheme.max_gram; ++k) {
        if (cps.size() < k) break;
        for (std::size_t i = 0; i + k <= cps.size(); ++i) {
            const auto b = cps[i].offset;
            const auto e = cps[i + k - 1].offset + cps[i + k - 1].length;
            add(FeatureKind::gram, cell.substr(b, e - b));
        }
    }
    return out;
}

namespace {

FeatureVector to_vector(std::vector<std::pair<FeatureId, double>> entries) {
    std::sort(entries.begin(), entries.end());
    FeatureVector v;
    v.entries.reserve(entries.size());
    for (const auto& e : entries) {
        if (e.second == 0.0) continue;
        if (!v.entries.empty() && v.entries.back().first == e.first) {
            v.entries.back().second += e.second;
        } else {
            v.entries.push_back(e);
        }
    }
    return v;
}

}  // namespace

FeatureVector tokenize(std::string_view cell, const TokenizationScheme& scheme,
                       FeatureDictionary& dict, bool frozen) {
    if (frozen) return tokenize_frozen(cell, scheme, dict);
    std::vector<std::pair<FeatureId, double>> entries;
    for (auto& [key, count] : feature_counts(cell, scheme)) {
        entries.emplace_back(dict.intern(key), count);
    }
    return to_vector(std::move(entries));
}

FeatureVector tokenize_frozen(std::string_view cell, const TokenizationScheme& scheme,
                              const FeatureDictionary& dict) {
    std::vector<std::pair<FeatureId, double>> entries;
    for (auto& [key, count] : feature_counts(cell, scheme)) {
        if (const auto id = dict.find(key)) entries.emplace_back(*id, count);
    }
    return to_vector(std::move(entries));
}

void append_examples(ExampleSet& set, const DataSource& ds, const TokenizationScheme& scheme,
                     FeatureDictionary& dict, bool frozen, std::string_view label_prefix) {
    scheme.validate();
    dict.bind_scheme(scheme);
    for (const auto& col : ds.columns()) {
        const auto label = set.classes.size();
        set.classes.push_back(std::string(label_prefix) + col.name);
        for (const auto& cell : col.cells) {
            set.examples.push_back({tokenize(cell, scheme, dict, frozen), label});
        }
    }
}

ExampleSet build_examples(const DataSource& ds, const TokenizationScheme& scheme,
                          FeatureDictionary& dict, bool frozen, std::string_view label_prefix) {
    ExampleSet set;
    set.examples.reserve(ds.total_cells());
    append_examples(set, ds, scheme, dict, frozen, label_prefix);
    return set;
}

}  // namespace fieldalign
