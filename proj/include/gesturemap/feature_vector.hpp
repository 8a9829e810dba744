#pragma once

#include <span>
#include <string>
#include <vector>

namespace gesturemap {

/// Named, ordered real-valued features. Names are unique.
struct FeatureVector
{
    std::vector<std::string> names;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    void push(std::string name, double value)
    {
        names.push_back(std::move(name));
        values.push_back(value);
    }
    void append(const FeatureVector& other)
    {
        names.insert(names.end(), other.names.begin(), other.names.end());
        values.insert(values.end(), other.values.begin(), other.values.end());
    }
    std::span<const double> span() const { return values; }

    bool operator==(const FeatureVector&) const = default;
};

} // namespace gesturemap
