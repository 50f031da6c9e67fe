#pragma once

// Value types shared by every stage of the pipeline: feature schemas,
// patient records and (CN, AD) logit pairs.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace nsad {

enum class FeatureKind { numeric, categorical };

std::string_view to_string(FeatureKind kind);

// Ordered name -> kind registry. Declaration order is preserved so schema
// files and CSV headers round-trip.
class FeatureSchema {
public:
    void add(std::string name, FeatureKind kind);
    std::optional<FeatureKind> kind_of(std::string_view name) const;
    bool contains(std::string_view name) const { return kind_of(name).has_value(); }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }

    bool operator==(const FeatureSchema& other) const { return names_ == other.names_ && kinds_ == other.kinds_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, FeatureKind, std::less<>> kinds_;
};

using FeatureValue = std::variant<double, std::string>;

// Binary diagnostic class after consolidation.
enum class Label : int { cn = 0, ad = 1 };

struct PatientRecord {
    std::string id;
    std::map<std::string, FeatureValue, std::less<>> features;  // absent key == missing
    std::optional<Label> label;

    const FeatureValue* find(std::string_view name) const {
        auto it = features.find(name);
        return it == features.end() ? nullptr : &it->second;
    }
    bool has(std::string_view name) const { return find(name) != nullptr; }
};

struct LogitPair {
    double cn = 0.0;
    double ad = 0.0;

    bool operator==(const LogitPair&) const = default;
};

// Gradient of a scalar with respect to (or of) a logit pair.
struct LogitGradient {
    double cn = 0.0;
    double ad = 0.0;
};

// Unreadable or unwritable files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Well-formed I/O carrying invalid content: malformed rows, unknown ids,
// schema violations.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when an effect expression reads a feature the record does not carry.
// Rule gating must prevent this; reaching it is a programming error.
class MissingFeatureError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace nsad
