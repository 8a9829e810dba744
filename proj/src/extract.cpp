#include "gesturemap/error.hpp"
#include "gesturemap/features.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <numeric>

namespace gesturemap::features {

using ingest::StreamKind;

const std::vector<FeatureInfo>& feature_registry()
{
    static const std::vector<FeatureInfo> registry{
        {"qom", StreamKind::marker, "quantity of motion (mass-weighted mean speeds)"},
        {"ci", StreamKind::marker, "contraction index of the last frame"},
        {"bbox", StreamKind::marker, "bounding box width/height/depth of the last frame"},
        {"hull", StreamKind::marker, "convex hull volume of the last frame"},
        {"fi", StreamKind::marker, "fluidity index of the selected marker"},
        {"speed", StreamKind::marker, "mean speed of the selected marker"},
        {"pos", StreamKind::marker, "x/y/z of the selected marker in the last frame"},
        {"pos_xy", StreamKind::marker, "x/y of the selected marker in the last frame"},
        {"pqom", StreamKind::marker, "periodic quantity of motion, one value per band"},
        {"quat", StreamKind::imu, "orientation quaternion of the last frame"},
        {"accel", StreamKind::imu, "mean acceleration"},
        {"gyro", StreamKind::imu, "mean angular rate"},
        {"mav", StreamKind::emg, "mean absolute value per channel"},
        {"rms", StreamKind::emg, "root mean square per channel"},
        {"zcr", StreamKind::emg, "zero crossings per channel"},
        {"tkeo", StreamKind::emg, "mean Teager-Kaiser energy per channel"},
        {"bayes", StreamKind::emg, "Bayesian amplitude estimate at the last sample, per channel"},
    };
    return registry;
}

std::string valid_feature_list()
{
    std::string out;
    for (const auto& f : feature_registry()) {
        if (!out.empty())
            out += ", ";
        out += f.name;
    }
    return out;
}

namespace {

const FeatureInfo* find_feature(std::string_view name)
{
    const auto& reg = feature_registry();
    const auto it = std::find_if(reg.begin(), reg.end(), [&](const FeatureInfo& f) { return f.name == name; });
    return it == reg.end() ? nullptr : &*it;
}

void add_marker_feature(FeatureVector& out, const std::string& name, const FeatureConfig& cfg, const MarkerWindow& w)
{
    const auto& last = w.frames.back();
    const auto idx = cfg.marker_index;
    if (name == "qom") {
        out.push("qom", quantity_of_motion(w));
    } else if (name == "ci") {
        out.push("ci", contraction_index(last));
    } else if (name == "bbox") {
        const auto e = bounding_box(last);
        out.push("bbox_w", e.width);
        out.push("bbox_h", e.height);
        out.push("bbox_d", e.depth);
    } else if (name == "hull") {
        out.push("hull", convex_hull_volume(last));
    } else if (name == "fi") {
        out.push("fi", fluidity_index(w, idx, cfg.fi_epsilon));
    } else if (name == "speed") {
        if (idx >= last.markers.size())
            fail(ErrorKind::parameter, "marker index out of range");
        ingest::MarkerFrames single;
        for (const auto& f : w.frames)
            single.push_back({f.t, {f.markers.at(idx)}});
        for (auto& f : single)
            f.markers.front().mass = 1.0;
        out.push("speed", quantity_of_motion({single, w.rate}));
    } else if (name == "pos" || name == "pos_xy") {
        if (idx >= last.markers.size())
            fail(ErrorKind::parameter, "marker index out of range");
        const auto& p = last.markers[idx].position;
        out.push("pos_x", p[0]);
        out.push("pos_y", p[1]);
        if (name == "pos")
            out.push("pos_z", p[2]);
    } else if (name == "pqom") {
        out.append(pqom(w, cfg.bands, idx));
    }
}

void add_imu_feature(FeatureVector& out, const std::string& name, const ImuWindow& w)
{
    if (name == "quat") {
        const auto& q = w.frames.back().quat;
        out.push("quat_w", q.w);
        out.push("quat_x", q.x);
        out.push("quat_y", q.y);
        out.push("quat_z", q.z);
        return;
    }
    Vec3 mean{};
    for (const auto& f : w.frames)
        mean = mean + (name == "accel" ? f.accel : f.gyro);
    mean = (1.0 / static_cast<double>(w.size())) * mean;
    out.push(name + "_x", mean[0]);
    out.push(name + "_y", mean[1]);
    out.push(name + "_z", mean[2]);
}

void add_emg_feature(FeatureVector& out, const std::string& name, const FeatureConfig& cfg, const EmgWindow& w)
{
    const auto channels = w.frames.front().channels.size();
    for (std::size_t c = 0; c < channels; ++c) {
        const auto x = channel_signal(w.frames, c);
        double v = 0.0;
        if (name == "mav")
            v = mav(x);
        else if (name == "rms")
            v = rms(x);
        else if (name == "zcr")
            v = static_cast<double>(zcr(x));
        else if (name == "tkeo") {
            const auto psi = tkeo(x);
            v = std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
        } else if (name == "bayes")
            v = bayes_amplitude(x, cfg.bayes).back();
        out.push(name + "_" + std::to_string(c), v);
    }
}

} // namespace

void validate_features(const FeatureConfig& config)
{
    if (config.features.empty())
        fail(ErrorKind::parameter, "no features configured; valid features: " + valid_feature_list());
    for (const auto& name : config.features)
        if (!find_feature(name))
            fail(ErrorKind::parameter, "unknown feature '" + name + "'; valid features: " + valid_feature_list());
    if (config.window < 2)
        fail(ErrorKind::parameter, "window must be at least 2 frames");
    if (config.hop < 1)
        fail(ErrorKind::parameter, "hop must be at least 1 frame");
}

FeatureVector extract(const FeatureConfig& config, const ingest::FrameStream& window)
{
    validate_features(config);
    if (window.empty())
        fail(ErrorKind::empty_input, "cannot extract features from an empty window");
    FeatureVector out;
    for (const auto& name : config.features) {
        const auto* info = find_feature(name);
        if (info->kind != window.kind())
            fail(ErrorKind::schema, "feature '" + name + "' needs a " + std::string(to_string(info->kind)) +
                                        " stream, got " + std::string(to_string(window.kind())));
        switch (window.kind()) {
        case StreamKind::marker: add_marker_feature(out, name, config, marker_window(window)); break;
        case StreamKind::imu: add_imu_feature(out, name, imu_window(window)); break;
        case StreamKind::emg: add_emg_feature(out, name, config, emg_window(window)); break;
        }
    }
    for (double v : out.values)
        if (!std::isfinite(v))
            fail(ErrorKind::data, "non-finite feature value");
    return out;
}

FeatureTable extract_table(const FeatureConfig& config, const ingest::FrameStream& stream)
{
    validate_features(config);
    if (stream.empty())
        fail(ErrorKind::empty_input, "empty input stream");
    if (stream.size() < config.window)
        fail(ErrorKind::insufficient_data, "stream has " + std::to_string(stream.size()) +
                                               " frames; window needs " + std::to_string(config.window));
    FeatureTable table;
    for (std::size_t start = 0; start + config.window <= stream.size(); start += config.hop) {
        const auto window = stream.slice(start, config.window);
        auto fv = extract(config, window);
        if (table.rows.empty())
            table.names = fv.names;
        table.times.push_back(window.time_at(window.size() - 1));
        table.rows.push_back(std::move(fv.values));
    }
    return table;
}

std::string table_to_csv(const FeatureTable& table)
{
    std::string out = "t";
    for (const auto& n : table.names)
        out += "," + n;
    out += '\n';
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        out += detail::format_double(table.times[r]);
        for (double v : table.rows[r]) {
            out += ',';
            out += detail::format_double(v);
        }
        out += '\n';
    }
    return out;
}

} // namespace gesturemap::features
