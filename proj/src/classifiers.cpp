#include "gesturemap/error.hpp"
#include "gesturemap/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace gesturemap::models {

namespace {

void check_rows(const std::vector<Vector>& rows, const char* what)
{
    const auto d = rows.front().size();
    if (d == 0)
        fail(ErrorKind::schema, std::string(what) + " vectors must not be empty");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d)
            fail(ErrorKind::schema, std::string(what) + " " + std::to_string(i) + " has dimension " +
                                        std::to_string(rows[i].size()) + ", expected " + std::to_string(d));
        for (double v : rows[i])
            if (!std::isfinite(v))
                fail(ErrorKind::data, std::string(what) + " " + std::to_string(i) + " has a non-finite value");
    }
}

void check_query(std::span<const double> query, std::size_t d)
{
    if (query.size() != d)
        fail(ErrorKind::schema, "query has dimension " + std::to_string(query.size()) + ", expected " +
                                    std::to_string(d));
}

double distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<std::string> sorted_labels(const std::vector<std::string>& labels)
{
    std::vector<std::string> out = labels;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

void validate(const RegressionSet& set)
{
    if (set.inputs.empty())
        fail(ErrorKind::insufficient_data, "training set is empty");
    if (set.inputs.size() != set.targets.size())
        fail(ErrorKind::schema, "training set has " + std::to_string(set.inputs.size()) + " inputs but " +
                                    std::to_string(set.targets.size()) + " targets");
    check_rows(set.inputs, "input");
    check_rows(set.targets, "target");
}

void validate(const ClassificationSet& set)
{
    if (set.inputs.empty())
        fail(ErrorKind::insufficient_data, "training set is empty");
    if (set.inputs.size() != set.labels.size())
        fail(ErrorKind::schema, "training set has " + std::to_string(set.inputs.size()) + " inputs but " +
                                    std::to_string(set.labels.size()) + " labels");
    check_rows(set.inputs, "input");
}

double ClassPosterior::probability_of(const std::string& label) const
{
    const auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? 0.0 : probabilities[static_cast<std::size_t>(it - labels.begin())];
}

const std::string& ClassPosterior::argmax() const
{
    if (labels.empty())
        fail(ErrorKind::empty_input, "empty posterior");
    const auto it = std::max_element(probabilities.begin(), probabilities.end());
    return labels[static_cast<std::size_t>(it - probabilities.begin())];
}

// ---------------------------------------------------------------------------

KnnResult knn_classify(const ClassificationSet& set, std::span<const double> query, std::size_t k)
{
    validate(set);
    check_query(query, set.inputs.front().size());
    if (k < 1 || k > set.size())
        fail(ErrorKind::parameter, "k must be in [1, " + std::to_string(set.size()) + "], got " + std::to_string(k));

    std::vector<Neighbor> all(set.size());
    for (std::size_t i = 0; i < set.size(); ++i)
        all[i] = {i, distance(set.inputs[i], query)};
    const auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);

    KnnResult r;
    r.posterior.labels = sorted_labels(set.labels);
    std::vector<std::size_t> votes(r.posterior.labels.size(), 0);
    Vector summed(r.posterior.labels.size(), 0.0);
    for (const auto& n : all) {
        const auto pos = std::lower_bound(r.posterior.labels.begin(), r.posterior.labels.end(), set.labels[n.index]) -
                         r.posterior.labels.begin();
        ++votes[static_cast<std::size_t>(pos)];
        summed[static_cast<std::size_t>(pos)] += n.distance;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[best] || (votes[c] == votes[best] && summed[c] < summed[best]))
            best = c;
    r.label = r.posterior.labels[best];
    for (auto v : votes)
        r.posterior.probabilities.push_back(static_cast<double>(v) / static_cast<double>(k));
    r.neighbors = std::move(all);
    return r;
}

NaiveBayesModel nb_train(const ClassificationSet& set)
{
    validate(set);
    NaiveBayesModel m;
    m.labels = sorted_labels(set.labels);
    const std::size_t d = set.inputs.front().size();
    for (const auto& label : m.labels) {
        Vector mean(d, 0.0);
        Vector var(d, 0.0);
        std::size_t n = 0;
        for (std::size_t i = 0; i < set.size(); ++i)
            if (set.labels[i] == label) {
                for (std::size_t j = 0; j < d; ++j)
                    mean[j] += set.inputs[i][j];
                ++n;
            }
        for (auto& v : mean)
            v /= static_cast<double>(n);
        for (std::size_t i = 0; i < set.size(); ++i)
            if (set.labels[i] == label)
                for (std::size_t j = 0; j < d; ++j)
                    var[j] += (set.inputs[i][j] - mean[j]) * (set.inputs[i][j] - mean[j]);
        for (auto& v : var)
            v = std::max(v / static_cast<double>(n), nb_variance_floor);
        m.means.push_back(std::move(mean));
        m.variances.push_back(std::move(var));
    }
    m.log_priors.assign(m.labels.size(), -std::log(static_cast<double>(m.labels.size())));
    return m;
}

ClassPosterior nb_posterior(const NaiveBayesModel& model, std::span<const double> query)
{
    if (model.labels.empty())
        fail(ErrorKind::empty_input, "naive bayes model has no classes");
    check_query(query, model.means.front().size());
    constexpr double log_two_pi = 1.8378770664093454836;
    Vector log_p(model.labels.size());
    for (std::size_t c = 0; c < model.labels.size(); ++c) {
        double lp = model.log_priors[c];
        for (std::size_t j = 0; j < query.size(); ++j) {
            const double diff = query[j] - model.means[c][j];
            lp -= 0.5 * (log_two_pi + std::log(model.variances[c][j]) + diff * diff / model.variances[c][j]);
        }
        log_p[c] = lp;
    }
    const double top = *std::max_element(log_p.begin(), log_p.end());
    double total = 0.0;
    for (auto& v : log_p) {
        v = std::exp(v - top);
        total += v;
    }
    for (auto& v : log_p)
        v /= total;
    return {model.labels, std::move(log_p)};
}

// ---------------------------------------------------------------------------

DtwResult dtw_distance(const Series& a, const Series& b)
{
    if (a.empty() || b.empty())
        fail(ErrorKind::empty_input, "dtw needs two nonempty series");
    const std::size_t d = a.front().size();
    for (const auto* s : {&a, &b})
        for (const auto& v : *s)
            if (v.size() != d)
                fail(ErrorKind::schema, "dtw series must share one dimension");

    const std::size_t n = a.size();
    const std::size_t m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> acc((n + 1) * (m + 1), inf);
    const auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * (m + 1) + j]; };
    at(0, 0) = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = distance(a[i - 1], b[j - 1]) + std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});

    DtwResult r;
    r.cost = at(n, m);
    std::size_t i = n;
    std::size_t j = m;
    while (true) {
        r.path.emplace_back(i - 1, j - 1);
        if (i == 1 && j == 1)
            break;
        // Prefer the diagonal on ties.
        const double diag = at(i - 1, j - 1);
        const double up = at(i - 1, j);
        const double left = at(i, j - 1);
        if (diag <= up && diag <= left) {
            --i;
            --j;
        } else if (up <= left) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(r.path.begin(), r.path.end());
    return r;
}

DtwClassification dtw_classify(std::span<const GestureTemplate> templates, const Series& query)
{
    if (templates.empty())
        fail(ErrorKind::empty_input, "gesture vocabulary is empty");
    DtwClassification r;
    std::size_t best = 0;
    for (std::size_t t = 0; t < templates.size(); ++t) {
        if (templates[t].series.empty())
            fail(ErrorKind::empty_input, "template '" + templates[t].label + "' is empty");
        r.costs.push_back(dtw_distance(templates[t].series, query).cost);
        if (r.costs[t] < r.costs[best] || (r.costs[t] == r.costs[best] && templates[t].label < templates[best].label))
            best = t;
    }
    r.label = templates[best].label;
    return r;
}

Vector interpolate_presets(const ClassPosterior& posterior, std::span<const Vector> presets)
{
    if (presets.size() != posterior.probabilities.size())
        fail(ErrorKind::schema, "posterior has " + std::to_string(posterior.probabilities.size()) +
                                    " classes but " + std::to_string(presets.size()) + " presets were given");
    if (presets.empty())
        fail(ErrorKind::empty_input, "no presets to interpolate");
    const std::size_t d = presets.front().size();
    Vector out(d, 0.0);
    for (std::size_t c = 0; c < presets.size(); ++c) {
        if (presets[c].size() != d)
            fail(ErrorKind::schema, "presets must share one dimension");
        for (std::size_t j = 0; j < d; ++j)
            out[j] += posterior.probabilities[c] * presets[c][j];
    }
    // Keep the result inside the presets' bounding box despite rounding.
    for (std::size_t j = 0; j < d; ++j) {
        double lo = presets.front()[j];
        double hi = lo;
        for (const auto& p : presets) {
            lo = std::min(lo, p[j]);
            hi = std::max(hi, p[j]);
        }
        out[j] = std::clamp(out[j], lo, hi);
    }
    return out;
}

} // namespace gesturemap::models
