#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gesturemap::models {

using Vector = std::vector<double>;

/// Input vectors paired with real-valued targets.
struct RegressionSet
{
    std::vector<Vector> inputs;
    std::vector<Vector> targets;

    std::size_t size() const { return inputs.size(); }
    void add(Vector input, Vector target)
    {
        inputs.push_back(std::move(input));
        targets.push_back(std::move(target));
    }
};

/// Input vectors paired with class labels.
struct ClassificationSet
{
    std::vector<Vector> inputs;
    std::vector<std::string> labels;

    std::size_t size() const { return inputs.size(); }
    void add(Vector input, std::string label)
    {
        inputs.push_back(std::move(input));
        labels.push_back(std::move(label));
    }
};

/// Throws schema/insufficient_data errors on ragged or empty sets.
void validate(const RegressionSet& set);
void validate(const ClassificationSet& set);

/// Probabilities over labels in a fixed (lexicographic) order.
struct ClassPosterior
{
    std::vector<std::string> labels;
    Vector probabilities;

    double probability_of(const std::string& label) const;
    /// Label with the highest probability; first in label order on ties.
    const std::string& argmax() const;
};

// ---------------------------------------------------------------------------
// Multilayer perceptron

struct MlpLayer
{
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    Vector weights; // row-major inputs x outputs
    Vector biases;

    bool operator==(const MlpLayer&) const = default;
};

/// Per-dimension min-max scaling into [0, 1]. A constant dimension gets range 1.
struct MinMax
{
    Vector min;
    Vector range;

    bool operator==(const MinMax&) const = default;
};

/// Sigmoid hidden layers, identity output layer. Normalization stats live in
/// the model; they are empty until the first training run.
struct MlpModel
{
    std::vector<std::size_t> layer_sizes;
    std::vector<MlpLayer> layers;
    MinMax input_norm;
    MinMax output_norm;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    bool operator==(const MlpModel&) const = default;
};

MlpModel mlp_init(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

struct TrainResult
{
    MlpModel model;
    Vector loss; // one entry per epoch, normalized-space mean squared error
};

/// Full-batch gradient descent. Normalization stats are refitted on `set`.
/// Zero epochs returns the model unchanged.
TrainResult mlp_train(MlpModel model, const RegressionSet& set, std::size_t epochs, double learning_rate);

Vector mlp_predict(const MlpModel& model, std::span<const double> input);

/// Mean squared error in normalized space, as minimized by mlp_train.
double mlp_loss(const MlpModel& model, const RegressionSet& set);

/// Max relative difference between backprop and central-difference gradients
/// over every weight and bias. Normalization is fitted on `set` first.
double gradient_check(const MlpModel& model, const RegressionSet& set, double h = 1e-5);

std::string mlp_to_json(const MlpModel& model);
MlpModel mlp_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Classifiers

struct Neighbor
{
    std::size_t index = 0;
    double distance = 0.0;
};

struct KnnResult
{
    std::string label;
    ClassPosterior posterior; // vote fractions over every label in the set
    std::vector<Neighbor> neighbors;
};

/// Euclidean k-NN. Neighbors are ordered by (distance, index); vote ties go to
/// the smaller summed distance, then the lexicographically first label.
KnnResult knn_classify(const ClassificationSet& set, std::span<const double> query, std::size_t k);

struct NaiveBayesModel
{
    std::vector<std::string> labels; // sorted
    std::vector<Vector> means;
    std::vector<Vector> variances;
    Vector log_priors;
};

constexpr double nb_variance_floor = 1e-6;

/// Gaussian naive Bayes with uniform priors.
NaiveBayesModel nb_train(const ClassificationSet& set);
ClassPosterior nb_posterior(const NaiveBayesModel& model, std::span<const double> query);

// ---------------------------------------------------------------------------
// Dynamic time warping

using Series = std::vector<Vector>;

struct DtwResult
{
    double cost = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> path;
};

/// Unnormalized DTW with Euclidean local cost and steps (1,0), (0,1), (1,1).
DtwResult dtw_distance(const Series& a, const Series& b);

struct GestureTemplate
{
    std::string label;
    Series series;
};

struct DtwClassification
{
    std::string label;
    Vector costs; // one per template, in template order
};

DtwClassification dtw_classify(std::span<const GestureTemplate> templates, const Series& query);

/// Convex combination of presets weighted by the posterior probabilities.
Vector interpolate_presets(const ClassPosterior& posterior, std::span<const Vector> presets);

} // namespace gesturemap::models
