// gesturemap command-line tool.
//
// stdout carries data only; diagnostics go to stderr.
// Exit codes: 0 ok, 2 data, 3 config, 4 numeric divergence, 5 environment.

#include "gesturemap/agent.hpp"
#include "gesturemap/corpus.hpp"
#include "gesturemap/error.hpp"
#include "gesturemap/features.hpp"
#include "gesturemap/ingest.hpp"
#include "gesturemap/models.hpp"
#include "gesturemap/server.hpp"
#include "gesturemap/session.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gesturemap;
using nlohmann::json;

namespace {

constexpr int exit_data = 2;
constexpr int exit_config = 3;
constexpr int exit_divergence = 4;
constexpr int exit_environment = 5;

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::parameter:
    case ErrorKind::range:
    case ErrorKind::registry:
    case ErrorKind::protocol: return exit_config;
    case ErrorKind::divergence: return exit_divergence;
    case ErrorKind::io: return exit_environment;
    default: return exit_data;
    }
}

std::string num(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

std::vector<std::string> split(const std::string& line, char sep)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep))
        out.push_back(cell);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

std::optional<double> to_double(std::string s)
{
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r'))
        s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && s[b] == ' ')
        ++b;
    double v = 0.0;
    const auto r = std::from_chars(s.data() + b, s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || b == s.size())
        return std::nullopt;
    return v;
}

struct NumericTable
{
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Comma-separated numbers, with an optional header row of names.
NumericTable read_numeric_csv(const std::string& path)
{
    const auto text = ingest::read_text_file(path);
    NumericTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split(line, ',');
        std::vector<double> row;
        bool numeric = true;
        for (const auto& c : cells) {
            const auto v = to_double(c);
            if (!v) {
                numeric = false;
                break;
            }
            row.push_back(*v);
        }
        if (!numeric) {
            if (t.header.empty() && t.rows.empty()) {
                t.header = cells;
                continue;
            }
            fail(ErrorKind::parse, path + " line " + std::to_string(number) + ": non-numeric value");
        }
        if (!t.rows.empty() && row.size() != t.rows.front().size())
            fail(ErrorKind::schema, path + " line " + std::to_string(number) + ": expected " +
                                        std::to_string(t.rows.front().size()) + " columns, got " +
                                        std::to_string(row.size()));
        t.rows.push_back(std::move(row));
    }
    if (t.rows.empty())
        fail(ErrorKind::empty_input, path + " has no data rows");
    return t;
}

ingest::FrameStream read_stream(const std::string& path)
{
    const auto ext = fs::path(path).extension().string();
    const auto text = ingest::read_text_file(path);
    if (ext == ".csv")
        return ingest::parse_mocap_csv(text);
    if (ext == ".jsonl")
        return ingest::parse_frames_jsonl(text);
    fail(ErrorKind::unsupported_format, "unsupported input '" + ext + "'; expected .csv or .jsonl");
}

void write_output(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-")
        std::cout << text;
    else
        ingest::write_text_file(path, text);
}

json read_json_file(const std::string& path)
{
    try {
        return json::parse(ingest::read_text_file(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, path + ": " + e.what());
    }
}

// --config FILE: each key names a long flag; flags given on the command line win.
std::vector<std::string> expand_config(std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<long>(i));
            break;
        }
    }
    if (path.empty())
        return args;
    const auto j = read_json_file(path);
    if (!j.is_object())
        fail(ErrorKind::parameter, path + ": config must be a JSON object of flag names");
    for (const auto& [key, value] : j.items()) {
        const auto flag = "--" + key;
        const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (given)
            continue;
        const auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (value.is_boolean()) {
            if (value.get<bool>())
                args.push_back(flag);
        } else if (value.is_array()) {
            args.push_back(flag);
            for (const auto& v : value)
                args.push_back(scalar(v));
        } else {
            args.push_back(flag);
            args.push_back(scalar(value));
        }
    }
    return args;
}

// ---------------------------------------------------------------------------

struct FeaturesArgs
{
    std::string input;
    std::vector<std::string> features{"qom"};
    std::size_t window = 32;
    std::size_t hop = 16;
    std::size_t marker_index = 0;
    double tempo = 120.0;
    std::string out;
};

int run_features(const FeaturesArgs& a)
{
    features::FeatureConfig cfg;
    cfg.features = a.features;
    cfg.window = a.window;
    cfg.hop = a.hop;
    cfg.marker_index = a.marker_index;
    cfg.bands.tempo_bpm = a.tempo;
    features::validate_features(cfg);
    const auto stream = read_stream(a.input);
    write_output(a.out, features::table_to_csv(features::extract_table(cfg, stream)));
    return 0;
}

struct TrainArgs
{
    std::string dataset;
    std::string model;
    std::size_t inputs = 0;
    std::vector<std::size_t> hidden{8};
    std::size_t epochs = 5000;
    double lr = 0.5;
    std::uint64_t seed = 0;
    std::string loss_out;
};

int run_train(const TrainArgs& a)
{
    const auto table = read_numeric_csv(a.dataset);
    const std::size_t cols = table.rows.front().size();
    if (a.inputs == 0 || a.inputs >= cols)
        fail(ErrorKind::parameter, "--inputs must be between 1 and " + std::to_string(cols - 1) + " for " +
                                       std::to_string(cols) + " columns");
    models::RegressionSet set;
    for (const auto& r : table.rows)
        set.add({r.begin(), r.begin() + static_cast<long>(a.inputs)}, {r.begin() + static_cast<long>(a.inputs), r.end()});
    std::vector<std::size_t> sizes{a.inputs};
    sizes.insert(sizes.end(), a.hidden.begin(), a.hidden.end());
    sizes.push_back(cols - a.inputs);
    const auto result = models::mlp_train(models::mlp_init(sizes, a.seed), set, a.epochs, a.lr);
    ingest::write_text_file(a.model, models::mlp_to_json(result.model));
    if (!a.loss_out.empty()) {
        std::string csv = "epoch,loss\n";
        for (std::size_t i = 0; i < result.loss.size(); ++i)
            csv += std::to_string(i + 1) + "," + num(result.loss[i]) + "\n";
        ingest::write_text_file(a.loss_out, csv);
    }
    std::cout << "final_mse," << num(models::mlp_loss(result.model, set)) << "\n";
    return 0;
}

struct PredictArgs
{
    std::string inputs;
    std::string model;
};

int run_predict(const PredictArgs& a)
{
    const auto model = models::mlp_from_json(ingest::read_text_file(a.model));
    const auto table = read_numeric_csv(a.inputs);
    if (table.rows.front().size() != model.input_size())
        fail(ErrorKind::parameter, "model expects " + std::to_string(model.input_size()) + " inputs, " + a.inputs +
                                       " has " + std::to_string(table.rows.front().size()) + " columns");
    std::string out;
    for (const auto& r : table.rows) {
        const auto y = models::mlp_predict(model, r);
        for (std::size_t j = 0; j < y.size(); ++j)
            out += (j ? "," : "") + num(y[j]);
        out += "\n";
    }
    std::cout << out;
    return 0;
}

struct CorpusBuildArgs
{
    std::vector<std::string> wavs;
    std::string out;
    double frame_ms = 20.0;
    double hop_ms = 10.0;
    double threshold = 4.0;
    double min_unit_ms = 50.0;
};

int run_corpus_build(const CorpusBuildArgs& a)
{
    const auto out_dir = fs::absolute(a.out).parent_path();
    std::vector<corpus::Source> sources;
    for (const auto& w : a.wavs) {
        auto s = corpus::load_source(w);
        s.path = fs::relative(fs::absolute(w), out_dir).generic_string();
        sources.push_back(std::move(s));
    }
    corpus::SegmentParams seg;
    seg.frame_ms = a.frame_ms;
    seg.hop_ms = a.hop_ms;
    seg.threshold_ratio = a.threshold;
    seg.min_unit_ms = a.min_unit_ms;
    corpus::BuildReport report;
    const auto c = corpus::build_corpus(std::move(sources), seg, {}, &report);
    ingest::write_text_file(a.out, corpus::corpus_to_json(c));
    std::cout << report.units << " units\n";
    std::cout << "mean_duration_s," << num(report.mean_duration_s) << "\n";
    std::cout << "skipped," << report.skipped << "\n";
    return 0;
}

struct CorpusQueryArgs
{
    std::string corpus;
    std::vector<std::string> target;
    std::string target_json;
    std::size_t k = 1;
};

int run_corpus_query(const CorpusQueryArgs& a)
{
    std::vector<double> target;
    if (!a.target_json.empty()) {
        const auto j = read_json_file(a.target_json);
        if (!j.is_array())
            fail(ErrorKind::parameter, a.target_json + ": target must be a JSON array of numbers");
        target = j.get<std::vector<double>>();
    } else {
        for (const auto& t : a.target)
            for (const auto& cell : split(t, ',')) {
                const auto v = to_double(cell);
                if (!v)
                    fail(ErrorKind::parameter, "--target value '" + cell + "' is not a number");
                target.push_back(*v);
            }
    }
    if (target.size() != corpus::descriptor_size)
        fail(ErrorKind::parameter, "--target needs " + std::to_string(corpus::descriptor_size) + " values, got " +
                                       std::to_string(target.size()));
    if (a.k == 0)
        fail(ErrorKind::parameter, "-k must be at least 1");
    const auto base = fs::absolute(a.corpus).parent_path().string();
    const auto c = corpus::corpus_from_json(ingest::read_text_file(a.corpus), base);
    std::cout << "rank,unit,source,start,length,distance\n";
    const auto matches = corpus::retrieve_knn(c, target, a.k);
    for (std::size_t i = 0; i < matches.size(); ++i) {
        const auto& u = c.units[matches[i].unit];
        std::cout << i + 1 << "," << matches[i].unit << "," << c.sources[u.source].id << "," << u.span.start << ","
                  << u.span.length << "," << num(matches[i].distance) << "\n";
    }
    return 0;
}

struct SimArgs
{
    std::string presets;
    std::string target;
    std::string space;
    std::size_t iterations = 200;
    std::uint64_t seed = 0;
    std::string log;
    int patience = 10;
    double step_size = 0.1;
    bool shared_direction = false;
};

int run_aiml_sim(const SimArgs& a)
{
    const auto pj = read_json_file(a.presets);
    const auto tj = read_json_file(a.target);
    std::vector<models::Vector> presets, targets;
    try {
        presets = pj.get<std::vector<models::Vector>>();
        targets = tj.get<std::vector<models::Vector>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::parameter, std::string("presets and targets must be arrays of number arrays: ") + e.what());
    }
    if (targets.size() != presets.size())
        fail(ErrorKind::parameter, std::to_string(presets.size()) + " presets but " + std::to_string(targets.size()) +
                                       " target points");
    agent::FeatureSpace space;
    if (!a.space.empty()) {
        const auto sj = read_json_file(a.space);
        try {
            space = {sj.value("names", std::vector<std::string>{}), sj.at("lo"), sj.at("hi")};
        } catch (const json::exception& e) {
            fail(ErrorKind::parameter, a.space + ": " + e.what());
        }
    } else {
        const std::size_t d = targets.empty() ? 0 : targets.front().size();
        space = {{}, models::Vector(d, 0.0), models::Vector(d, 1.0)};
        for (std::size_t j = 0; j < d; ++j)
            space.names.push_back("x" + std::to_string(j));
    }
    for (const auto& t : targets)
        if (!space.contains(t))
            fail(ErrorKind::parameter, "target points must lie inside the feature space");

    agent::AgentConfig cfg;
    cfg.step_size = a.step_size;
    cfg.shared_direction = a.shared_direction;
    auto state = agent::agent_init(space, presets, a.seed, cfg);
    agent::FeedbackOracle oracle(targets, a.patience);

    const double initial = oracle.mean_distance(state.positions);
    std::string out = "iteration,mean_distance,feedback\n0," + num(initial) + ",\n";
    for (std::size_t i = 1; i <= a.iterations; ++i) {
        const auto p = agent::agent_propose(state);
        const auto fb = oracle.judge(p);
        const char* name = "zone";
        if (fb == agent::FeedbackOracle::Feedback::positive) {
            agent::apply_guiding_feedback(state, 1);
            name = "+1";
        } else if (fb == agent::FeedbackOracle::Feedback::negative) {
            agent::apply_guiding_feedback(state, -1);
            name = "-1";
        } else {
            agent::apply_zone_feedback(state);
        }
        out += std::to_string(i) + "," + num(oracle.mean_distance(p.points)) + "," + name + "\n";
    }
    const double final_distance = oracle.mean_distance(state.positions);
    out += "# state_hash " + agent::state_hash(state) + "\n";
    std::cout << out;
    if (!a.log.empty())
        ingest::write_text_file(a.log, agent::history_to_jsonl(state.history));
    std::cerr << "initial " << num(initial) << " final " << num(final_distance) << " ratio "
              << num(final_distance / initial) << "\n";
    return 0;
}

int run_replay(const std::string& log)
{
    const auto state = agent::replay(agent::history_from_jsonl(ingest::read_text_file(log)));
    std::cout << "# state_hash " << agent::state_hash(state) << "\n";
    return 0;
}

struct ServeArgs
{
    std::string address = "127.0.0.1";
    unsigned short port = 8080;
    std::string session_dir;
    std::string corpus;
    std::size_t threads = 2;
};

int run_serve(const ServeArgs& a)
{
    server::ServerOptions o;
    o.address = a.address;
    o.port = a.port;
    o.threads = a.threads;
    o.hub.session_dir = a.session_dir;
    if (!a.corpus.empty()) {
        const auto base = fs::absolute(a.corpus).parent_path().string();
        o.hub.corpus = std::make_shared<corpus::Corpus>(corpus::corpus_from_json(ingest::read_text_file(a.corpus), base));
    }
    server::Server s(std::move(o));
    std::cerr << "listening on " << a.address << ":" << s.port() << std::endl;
    s.run_until_signal();
    std::cerr << "stopped; sessions saved" << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"gesturemap: gesture features, mapping models, sound control", "gesturemap"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");
    app.add_option("--config", "JSON file whose keys are long flag names");

    FeaturesArgs fa;
    auto* features = app.add_subcommand("features", "Windowed motion/EMG descriptors as CSV");
    features->add_option("input", fa.input, "Mocap CSV or frames JSONL")->required();
    features->add_option("--feature", fa.features, "Feature names (repeat or comma-separate)")->delimiter(',');
    features->add_option("--window", fa.window, "Frames per window")->capture_default_str();
    features->add_option("--hop", fa.hop, "Frames between windows")->capture_default_str();
    features->add_option("--marker-index", fa.marker_index, "Marker for per-marker features")->capture_default_str();
    features->add_option("--tempo", fa.tempo, "Tempo for pqom bands, BPM")->capture_default_str();
    features->add_option("--out", fa.out, "Output CSV (default stdout)");

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train an MLP on a CSV dataset");
    train->add_option("dataset", ta.dataset, "CSV: input columns then target columns")->required();
    train->add_option("--model", ta.model, "Output model JSON")->required();
    train->add_option("--inputs", ta.inputs, "Number of leading input columns")->required();
    train->add_option("--hidden", ta.hidden, "Hidden layer sizes")->capture_default_str();
    train->add_option("--epochs", ta.epochs, "Full-batch epochs")->capture_default_str();
    train->add_option("--lr", ta.lr, "Learning rate")->capture_default_str();
    train->add_option("--seed", ta.seed, "Initialization seed")->required();
    train->add_option("--loss-out", ta.loss_out, "Write the per-epoch loss curve as CSV");

    PredictArgs pa;
    auto* predict = app.add_subcommand("predict", "Run a trained MLP on CSV inputs, one output line per row");
    predict->add_option("inputs", pa.inputs, "CSV of input rows")->required();
    predict->add_option("--model", pa.model, "Model JSON")->required();

    auto* corpus_cmd = app.add_subcommand("corpus", "Build or query an audio unit corpus");
    corpus_cmd->require_subcommand(1);
    CorpusBuildArgs cb;
    auto* build = corpus_cmd->add_subcommand("build", "Segment and analyze WAV files");
    build->add_option("wavs", cb.wavs, "WAV files")->required();
    build->add_option("--out", cb.out, "Corpus JSON")->required();
    build->add_option("--frame-ms", cb.frame_ms, "Segmentation frame")->capture_default_str();
    build->add_option("--hop-ms", cb.hop_ms, "Segmentation hop")->capture_default_str();
    build->add_option("--threshold", cb.threshold, "Onset energy ratio over the running median")
        ->capture_default_str();
    build->add_option("--min-unit-ms", cb.min_unit_ms, "Shorter units merge forward")->capture_default_str();
    CorpusQueryArgs cq;
    auto* query = corpus_cmd->add_subcommand("query", "Nearest units to a 19-value descriptor");
    query->add_option("--corpus", cq.corpus, "Corpus JSON")->required();
    auto* tgt = query->add_option("--target", cq.target, "19 descriptor values")->delimiter(',');
    auto* tgt_json = query->add_option("--target-json", cq.target_json, "JSON array of 19 values");
    tgt->excludes(tgt_json);
    query->add_option("-k", cq.k, "Number of units")->capture_default_str();

    SimArgs sa;
    auto* sim = app.add_subcommand("aiml-sim", "Agent exploration against a simulated user");
    sim->add_option("--presets", sa.presets, "JSON array of preset vectors")->required();
    sim->add_option("--target", sa.target, "JSON array of hidden target points, one per preset")->required();
    sim->add_option("--space", sa.space, "JSON {names, lo, hi}; default unit box");
    sim->add_option("--iterations", sa.iterations, "Propose/feedback rounds")->capture_default_str();
    sim->add_option("--seed", sa.seed, "Agent seed")->required();
    sim->add_option("--log", sa.log, "Write the replayable history JSONL");
    sim->add_option("--patience", sa.patience, "Misses before a zone request")->capture_default_str();
    sim->add_option("--step-size", sa.step_size, "Initial step, fraction of the diagonal")->capture_default_str();
    sim->add_flag("--shared-direction", sa.shared_direction, "One direction for all points");

    std::string log;
    auto* rep = app.add_subcommand("replay", "Replay a history log and print the state hash");
    rep->add_option("log", log, "History JSONL")->required();

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "HTTP and WebSocket service");
    serve->add_option("--port", sv.port, "TCP port")->capture_default_str();
    serve->add_option("--address", sv.address, "Bind address")->capture_default_str();
    serve->add_option("--session-dir", sv.session_dir, "Directory for sessions and saved mappings");
    serve->add_option("--corpus", sv.corpus, "Corpus JSON for corpus-target sessions");
    serve->add_option("--threads", sv.threads, "Worker threads")->capture_default_str();

    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);

        if (*features)
            return run_features(fa);
        if (*train)
            return run_train(ta);
        if (*predict)
            return run_predict(pa);
        if (*build)
            return run_corpus_build(cb);
        if (*query) {
            if (cq.target.empty() && cq.target_json.empty())
                fail(ErrorKind::parameter, "give --target or --target-json");
            return run_corpus_query(cq);
        }
        if (*sim)
            return run_aiml_sim(sa);
        if (*rep)
            return run_replay(log);
        if (*serve)
            return run_serve(sv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_environment;
    }
    return 0;
}
