#include "gesturemap/error.hpp"
#include "gesturemap/models.hpp"
#include "text_util.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace gesturemap::models {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

constexpr int mlp_format_version = 1;

Eigen::Map<const Matrix> weights_of(const MlpLayer& l)
{
    return {l.weights.data(), static_cast<Eigen::Index>(l.inputs), static_cast<Eigen::Index>(l.outputs)};
}

Eigen::Map<const RowVector> biases_of(const MlpLayer& l)
{
    return {l.biases.data(), static_cast<Eigen::Index>(l.outputs)};
}

MinMax fit_min_max(const std::vector<Vector>& rows)
{
    const std::size_t d = rows.front().size();
    MinMax s{Vector(d), Vector(d)};
    for (std::size_t j = 0; j < d; ++j) {
        double lo = rows.front()[j];
        double hi = lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r[j]);
            hi = std::max(hi, r[j]);
        }
        s.min[j] = lo;
        s.range[j] = hi > lo ? hi - lo : 1.0;
    }
    return s;
}

double scale(const MinMax& s, std::size_t j, double v)
{
    return s.min.empty() ? v : (v - s.min[j]) / s.range[j];
}

double unscale(const MinMax& s, std::size_t j, double v)
{
    return s.min.empty() ? v : v * s.range[j] + s.min[j];
}

Matrix normalized(const std::vector<Vector>& rows, const MinMax& s)
{
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(i, j) = scale(s, j, rows[i][j]);
    return m;
}

void check_set_against(const MlpModel& model, const RegressionSet& set)
{
    validate(set);
    if (set.inputs.front().size() != model.input_size() || set.targets.front().size() != model.output_size())
        fail(ErrorKind::schema, "training set is " + std::to_string(set.inputs.front().size()) + " -> " +
                                    std::to_string(set.targets.front().size()) + " but the model is " +
                                    std::to_string(model.input_size()) + " -> " + std::to_string(model.output_size()));
}

/// Activations per layer, starting with the input batch.
std::vector<Matrix> forward(const MlpModel& model, const Matrix& x)
{
    std::vector<Matrix> acts{x};
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        Matrix z = acts.back() * weights_of(layer);
        z.rowwise() += biases_of(layer);
        if (l + 1 < model.layers.size())
            z = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        acts.push_back(std::move(z));
    }
    return acts;
}

double mse(const Matrix& y, const Matrix& t)
{
    return (y - t).squaredNorm() / static_cast<double>(y.size());
}

struct Gradients
{
    std::vector<Matrix> weights;
    std::vector<RowVector> biases;
    double loss = 0.0;
};

Gradients backprop(const MlpModel& model, const Matrix& x, const Matrix& t)
{
    const auto acts = forward(model, x);
    const std::size_t n_layers = model.layers.size();
    Gradients g;
    g.weights.resize(n_layers);
    g.biases.resize(n_layers);
    g.loss = mse(acts.back(), t);

    Matrix delta = (2.0 / static_cast<double>(t.size())) * (acts.back() - t);
    for (std::size_t l = n_layers; l-- > 0;) {
        g.weights[l] = acts[l].transpose() * delta;
        g.biases[l] = delta.colwise().sum();
        if (l > 0) {
            const auto& a = acts[l].array();
            delta = ((delta * weights_of(model.layers[l]).transpose()).array() * a * (1.0 - a)).matrix();
        }
    }
    return g;
}

} // namespace

MlpModel mlp_init(std::span<const std::size_t> layer_sizes, std::uint64_t seed)
{
    if (layer_sizes.size() < 2)
        fail(ErrorKind::parameter, "an mlp needs at least an input and an output layer");
    for (auto s : layer_sizes)
        if (s < 1)
            fail(ErrorKind::parameter, "every mlp layer needs at least one unit");

    MlpModel m;
    m.layer_sizes.assign(layer_sizes.begin(), layer_sizes.end());
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        MlpLayer layer;
        layer.inputs = layer_sizes[l];
        layer.outputs = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
        layer.weights.resize(layer.inputs * layer.outputs);
        for (auto& w : layer.weights) {
            // 53 random bits -> [0, 1); std distributions are not portable across libraries.
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            w = (2.0 * u - 1.0) * limit;
        }
        layer.biases.assign(layer.outputs, 0.0);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

TrainResult mlp_train(MlpModel model, const RegressionSet& set, std::size_t epochs, double learning_rate)
{
    check_set_against(model, set);
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        fail(ErrorKind::parameter, "learning rate must be positive");
    TrainResult result;
    if (epochs == 0) {
        result.model = std::move(model);
        return result;
    }

    model.input_norm = fit_min_max(set.inputs);
    model.output_norm = fit_min_max(set.targets);
    const Matrix x = normalized(set.inputs, model.input_norm);
    const Matrix t = normalized(set.targets, model.output_norm);

    result.loss.reserve(epochs);
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        const auto g = backprop(model, x, t);
        if (!std::isfinite(g.loss))
            fail(ErrorKind::divergence, "training diverged at epoch " + std::to_string(epoch));
        result.loss.push_back(g.loss);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            auto& layer = model.layers[l];
            Eigen::Map<Matrix> w(layer.weights.data(), layer.inputs, layer.outputs);
            Eigen::Map<RowVector> b(layer.biases.data(), layer.outputs);
            w -= learning_rate * g.weights[l];
            b -= learning_rate * g.biases[l];
        }
    }
    result.model = std::move(model);
    return result;
}

Vector mlp_predict(const MlpModel& model, std::span<const double> input)
{
    if (input.size() != model.input_size())
        fail(ErrorKind::schema, "model expects " + std::to_string(model.input_size()) + " inputs, got " +
                                    std::to_string(input.size()));
    Matrix x(1, input.size());
    for (std::size_t j = 0; j < input.size(); ++j)
        x(0, j) = scale(model.input_norm, j, input[j]);
    const auto acts = forward(model, x);
    Vector out(model.output_size());
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = unscale(model.output_norm, j, acts.back()(0, j));
    return out;
}

double mlp_loss(const MlpModel& model, const RegressionSet& set)
{
    check_set_against(model, set);
    const auto acts = forward(model, normalized(set.inputs, model.input_norm));
    return mse(acts.back(), normalized(set.targets, model.output_norm));
}

double gradient_check(const MlpModel& model, const RegressionSet& set, double h)
{
    check_set_against(model, set);
    if (!(h > 0.0))
        fail(ErrorKind::parameter, "finite-difference step must be positive");
    MlpModel m = model;
    m.input_norm = fit_min_max(set.inputs);
    m.output_norm = fit_min_max(set.targets);
    const Matrix x = normalized(set.inputs, m.input_norm);
    const Matrix t = normalized(set.targets, m.output_norm);
    const auto g = backprop(m, x, t);

    double worst = 0.0;
    const auto compare = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = mse(forward(m, x).back(), t);
        param = saved - h;
        const double down = mse(forward(m, x).back(), t);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        for (std::size_t i = 0; i < layer.inputs; ++i)
            for (std::size_t j = 0; j < layer.outputs; ++j)
                compare(layer.weights[i * layer.outputs + j], g.weights[l](i, j));
        for (std::size_t j = 0; j < layer.outputs; ++j)
            compare(layer.biases[j], g.biases[l](j));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json hex_array(const Vector& v)
{
    auto a = nlohmann::json::array();
    for (double x : v)
        a.push_back(detail::to_hex(x));
    return a;
}

Vector read_hex_array(const nlohmann::json& a, std::size_t expected, const char* what)
{
    if (!a.is_array() || a.size() != expected)
        fail(ErrorKind::schema, std::string("mlp field '") + what + "' should hold " + std::to_string(expected) +
                                    " values");
    Vector v;
    for (const auto& e : a) {
        if (!e.is_string())
            fail(ErrorKind::schema, std::string("mlp field '") + what + "' must hold hex-float strings");
        v.push_back(detail::from_hex(e.get<std::string>()));
    }
    return v;
}

nlohmann::json norm_json(const MinMax& s)
{
    return {{"min", hex_array(s.min)}, {"range", hex_array(s.range)}};
}

MinMax read_norm(const nlohmann::json& j, std::size_t d)
{
    if (j.is_null())
        return {};
    const std::size_t n = j.at("min").size();
    if (n != 0 && n != d)
        fail(ErrorKind::schema, "normalization stats do not match the layer size");
    MinMax s{read_hex_array(j.at("min"), n, "min"), read_hex_array(j.at("range"), n, "range")};
    for (double r : s.range)
        if (!(r > 0.0) || !std::isfinite(r))
            fail(ErrorKind::schema, "normalization ranges must be positive and finite");
    return s;
}

} // namespace

std::string mlp_to_json(const MlpModel& model)
{
    nlohmann::ordered_json doc;
    doc["format"] = "gesturemap-mlp";
    doc["version"] = mlp_format_version;
    doc["layer_sizes"] = model.layer_sizes;
    auto layers = nlohmann::json::array();
    for (const auto& l : model.layers)
        layers.push_back({{"weights", hex_array(l.weights)}, {"biases", hex_array(l.biases)}});
    doc["layers"] = layers;
    doc["input_norm"] = norm_json(model.input_norm);
    doc["output_norm"] = norm_json(model.output_norm);
    return doc.dump(2) + "\n";
}

MlpModel mlp_from_json(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, std::string("mlp json: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "gesturemap-mlp")
            fail(ErrorKind::schema, "not an mlp document");
        const int version = doc.at("version").get<int>();
        if (version != mlp_format_version)
            fail(ErrorKind::version, "unsupported mlp version " + std::to_string(version));
        const auto sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
        MlpModel m = mlp_init(sizes, 0);
        const auto& layers = doc.at("layers");
        if (!layers.is_array() || layers.size() != m.layers.size())
            fail(ErrorKind::schema, "layer count does not match layer_sizes");
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            auto& layer = m.layers[l];
            layer.weights = read_hex_array(layers[l].at("weights"), layer.inputs * layer.outputs, "weights");
            layer.biases = read_hex_array(layers[l].at("biases"), layer.outputs, "biases");
        }
        m.input_norm = read_norm(doc.value("input_norm", nlohmann::json()), m.input_size());
        m.output_norm = read_norm(doc.value("output_norm", nlohmann::json()), m.output_size());
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::schema, std::string("mlp json: ") + e.what());
    }
}

} // namespace gesturemap::models
