#include "skyseg/scenario.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "skyseg/metrics.hpp"

namespace skyseg {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void bad_enum(const std::string& key, const std::string& got,
                           std::initializer_list<const char*> allowed) {
    std::string list;
    for (const char* a : allowed) {
        if (!list.empty()) list += ", ";
        list += a;
    }
    throw ConfigError("invalid value '" + got + "' for " + key + ": allowed values are " + list);
}

std::string get_string(const json& v, const std::string& path) {
    if (!v.is_string()) throw ConfigError(path + " must be a string");
    return v.get<std::string>();
}

double get_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + " must be a number");
    return v.get<double>();
}

uint64_t get_uint(const json& v, const std::string& path) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<int64_t>() >= 0)) {
        throw ConfigError(path + " must be a non-negative integer");
    }
    return v.get<uint64_t>();
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config section " + prefix + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* a : allowed) {
            if (it.key() == a) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("unknown config key: " + (prefix.empty() ? "" : prefix + ".") + it.key());
        }
    }
}

FusionMode parse_fusion(const std::string& v) {
    if (v == "replace") return FusionMode::Replace;
    if (v == "prob") return FusionMode::Prob;
    bad_enum("fusion", v, {"replace", "prob"});
}

SelectionMethod parse_selection(const std::string& v) {
    if (v == "random") return SelectionMethod::Random;
    if (v == "order") return SelectionMethod::Order;
    if (v == "reorder") return SelectionMethod::Reorder;
    if (v == "attention") return SelectionMethod::Attention;
    bad_enum("selection", v, {"random", "order", "reorder", "attention"});
}

TtaMode parse_tta(const std::string& v) {
    if (v == "off") return TtaMode::Off;
    if (v == "local") return TtaMode::Local;
    if (v == "cross") return TtaMode::Cross;
    bad_enum("tta", v, {"off", "local", "cross"});
}

AggregateMode parse_aggregate(const std::string& v) {
    if (v == "mean") return AggregateMode::Mean;
    if (v == "sum") return AggregateMode::Sum;
    bad_enum("aggregate", v, {"mean", "sum"});
}

std::optional<Corruption> parse_corruption_kind(const std::string& v, const std::string& key) {
    if (v == "none") return std::nullopt;
    if (v == "snow") return Corruption::Snow;
    if (v == "fog") return Corruption::Fog;
    if (v == "frost") return Corruption::Frost;
    bad_enum(key, v, {"none", "snow", "fog", "frost"});
}

BackendKind parse_backend(const std::string& v, const std::string& key,
                          std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (v == a) {
            if (v == "transformer") return BackendKind::Transformer;
            if (v == "cnn") return BackendKind::Cnn;
            return BackendKind::Oracle;
        }
    }
    bad_enum(key, v, allowed);
}

std::vector<CnnLayerSpec> tiny_cnn_layers() {
    return {{8, 3, 2}, {16, 3, 2}, {16, 1, 1}, {24, 1, 1}};
}

}  // namespace

MissionConfig parse_config(const json& doc) {
    MissionConfig cfg;
    check_keys(doc, "",
               {"seed", "rounds", "followers", "fusion", "selection", "tta", "aggregate", "alpha",
                "capture_size", "scene", "corruption", "leader", "follower", "network", "compute",
                "weights"});

    if (doc.contains("seed")) cfg.seed = get_uint(doc["seed"], "seed");
    if (doc.contains("rounds")) cfg.rounds = static_cast<uint32_t>(get_uint(doc["rounds"], "rounds"));
    if (doc.contains("followers")) cfg.followers = get_uint(doc["followers"], "followers");
    if (doc.contains("fusion")) cfg.fusion = parse_fusion(get_string(doc["fusion"], "fusion"));
    if (doc.contains("selection")) {
        cfg.selection = parse_selection(get_string(doc["selection"], "selection"));
    }
    if (doc.contains("tta")) cfg.tta = parse_tta(get_string(doc["tta"], "tta"));
    if (doc.contains("aggregate")) {
        cfg.aggregate = parse_aggregate(get_string(doc["aggregate"], "aggregate"));
    }
    if (doc.contains("alpha")) cfg.alpha = static_cast<float>(get_number(doc["alpha"], "alpha"));
    if (doc.contains("capture_size")) {
        cfg.capture_size = get_uint(doc["capture_size"], "capture_size");
    }

    if (doc.contains("scene")) {
        const json& s = doc["scene"];
        check_keys(s, "scene", {"width", "height", "num_classes"});
        if (s.contains("width")) cfg.scene.width = get_uint(s["width"], "scene.width");
        if (s.contains("height")) cfg.scene.height = get_uint(s["height"], "scene.height");
        if (s.contains("num_classes")) {
            cfg.scene.num_classes = get_uint(s["num_classes"], "scene.num_classes");
        }
    }

    if (doc.contains("corruption")) {
        const json& c = doc["corruption"];
        check_keys(c, "corruption", {"kind", "severity", "schedule"});
        if (c.contains("kind")) {
            cfg.corruption = parse_corruption_kind(get_string(c["kind"], "corruption.kind"),
                                                   "corruption.kind");
        }
        if (c.contains("severity")) {
            cfg.severity = static_cast<int>(get_number(c["severity"], "corruption.severity"));
        }
        if (c.contains("schedule")) {
            if (!c["schedule"].is_array()) throw ConfigError("corruption.schedule must be an array");
            for (const json& step : c["schedule"]) {
                check_keys(step, "corruption.schedule[]", {"round", "kind", "severity"});
                CorruptionStep cs;
                if (!step.contains("round")) throw ConfigError("corruption.schedule[] needs a round");
                cs.from_round = static_cast<uint32_t>(get_uint(step["round"], "corruption.schedule.round"));
                if (step.contains("kind")) {
                    cs.kind = parse_corruption_kind(get_string(step["kind"], "corruption.schedule.kind"),
                                                    "corruption.schedule.kind");
                }
                if (step.contains("severity")) {
                    cs.severity = static_cast<int>(get_number(step["severity"], "corruption.schedule.severity"));
                }
                cfg.schedule.push_back(cs);
            }
        }
    }

    if (doc.contains("leader")) {
        const json& l = doc["leader"];
        check_keys(l, "leader", {"backend", "oracle", "hotspot", "transformer"});
        if (l.contains("backend")) {
            cfg.leader.kind = parse_backend(get_string(l["backend"], "leader.backend"),
                                            "leader.backend", {"transformer", "oracle"});
        }
        if (l.contains("oracle")) {
            const json& o = l["oracle"];
            check_keys(o, "leader.oracle", {"accuracy", "confidence"});
            if (o.contains("accuracy")) {
                cfg.leader.oracle.accuracy = static_cast<float>(get_number(o["accuracy"], "leader.oracle.accuracy"));
            }
            if (o.contains("confidence")) {
                cfg.leader.oracle.confidence =
                    static_cast<float>(get_number(o["confidence"], "leader.oracle.confidence"));
            }
        }
        if (l.contains("hotspot")) {
            const json& h = l["hotspot"];
            check_keys(h, "leader.hotspot", {"x0", "y0", "x1", "y1", "accuracy"});
            GeoRect r;
            r.x0 = get_uint(h.value("x0", json(0)), "leader.hotspot.x0");
            r.y0 = get_uint(h.value("y0", json(0)), "leader.hotspot.y0");
            r.x1 = get_uint(h.value("x1", json(0)), "leader.hotspot.x1");
            r.y1 = get_uint(h.value("y1", json(0)), "leader.hotspot.y1");
            cfg.leader.hotspot = r;
            if (h.contains("accuracy")) {
                cfg.leader.hotspot_accuracy =
                    static_cast<float>(get_number(h["accuracy"], "leader.hotspot.accuracy"));
            }
        }
        if (l.contains("transformer")) {
            const json& t = l["transformer"];
            check_keys(t, "leader.transformer", {"dim_divisor", "mlp_ratio"});
            if (t.contains("dim_divisor")) {
                cfg.leader.transformer.dim_divisor = get_uint(t["dim_divisor"], "leader.transformer.dim_divisor");
            }
            if (t.contains("mlp_ratio")) {
                cfg.leader.transformer.mlp_ratio = get_uint(t["mlp_ratio"], "leader.transformer.mlp_ratio");
            }
        }
    }

    if (doc.contains("follower")) {
        const json& f = doc["follower"];
        check_keys(f, "follower", {"backend", "oracle", "cnn"});
        if (f.contains("backend")) {
            cfg.follower.kind = parse_backend(get_string(f["backend"], "follower.backend"),
                                              "follower.backend", {"cnn", "oracle"});
        }
        if (f.contains("oracle")) {
            const json& o = f["oracle"];
            check_keys(o, "follower.oracle", {"accuracy", "confidence"});
            if (o.contains("accuracy")) {
                cfg.follower.oracle.accuracy =
                    static_cast<float>(get_number(o["accuracy"], "follower.oracle.accuracy"));
            }
            if (o.contains("confidence")) {
                cfg.follower.oracle.confidence =
                    static_cast<float>(get_number(o["confidence"], "follower.oracle.confidence"));
            }
        }
        if (f.contains("cnn")) {
            const json& c = f["cnn"];
            check_keys(c, "follower.cnn", {"input_size", "preset", "layers"});
            if (c.contains("input_size")) {
                cfg.follower.cnn.input_size = get_uint(c["input_size"], "follower.cnn.input_size");
            }
            if (c.contains("layers")) {
                if (!c["layers"].is_array()) throw ConfigError("follower.cnn.layers must be an array");
                cfg.follower.cnn.layers.clear();
                for (const json& layer : c["layers"]) {
                    if (!layer.is_array() || layer.size() != 3) {
                        throw ConfigError("follower.cnn.layers entries must be [channels, kernel, stride]");
                    }
                    cfg.follower.cnn.layers.push_back(
                        CnnLayerSpec{get_uint(layer[0], "follower.cnn.layers.channels"),
                                     get_uint(layer[1], "follower.cnn.layers.kernel"),
                                     get_uint(layer[2], "follower.cnn.layers.stride")});
                }
            } else if (c.contains("preset")) {
                std::string preset = get_string(c["preset"], "follower.cnn.preset");
                if (preset == "default") {
                    cfg.follower.cnn.layers = CnnConfig::default_layers();
                } else if (preset == "tiny") {
                    cfg.follower.cnn.layers = tiny_cnn_layers();
                    if (!c.contains("input_size")) cfg.follower.cnn.input_size = 32;
                } else {
                    bad_enum("follower.cnn.preset", preset, {"default", "tiny"});
                }
            }
        }
    }

    if (doc.contains("network")) {
        const json& n = doc["network"];
        check_keys(n, "network", {"bandwidth_bytes_per_s", "rtt_s", "loss_rate", "seed"});
        if (n.contains("bandwidth_bytes_per_s")) {
            cfg.network.bandwidth_bytes_per_s = get_number(n["bandwidth_bytes_per_s"], "network.bandwidth_bytes_per_s");
        }
        if (n.contains("rtt_s")) cfg.network.rtt_s = get_number(n["rtt_s"], "network.rtt_s");
        if (n.contains("loss_rate")) cfg.network.loss_rate = get_number(n["loss_rate"], "network.loss_rate");
        if (n.contains("seed")) cfg.network.seed = get_uint(n["seed"], "network.seed");
    }

    if (doc.contains("compute")) {
        const json& c = doc["compute"];
        check_keys(c, "compute",
                   {"leader_flops_per_s", "follower_flops_per_s", "oracle_flops_per_pixel",
                    "fusion_flops_per_pixel"});
        if (c.contains("leader_flops_per_s")) {
            cfg.compute.leader_flops_per_s = get_number(c["leader_flops_per_s"], "compute.leader_flops_per_s");
        }
        if (c.contains("follower_flops_per_s")) {
            cfg.compute.follower_flops_per_s = get_number(c["follower_flops_per_s"], "compute.follower_flops_per_s");
        }
        if (c.contains("oracle_flops_per_pixel")) {
            cfg.compute.oracle_flops_per_pixel = get_number(c["oracle_flops_per_pixel"], "compute.oracle_flops_per_pixel");
        }
        if (c.contains("fusion_flops_per_pixel")) {
            cfg.compute.fusion_flops_per_pixel = get_number(c["fusion_flops_per_pixel"], "compute.fusion_flops_per_pixel");
        }
    }

    if (doc.contains("weights")) {
        const json& w = doc["weights"];
        check_keys(w, "weights", {"w1", "w2", "w3", "w4"});
        if (w.contains("w1")) cfg.weights.w1 = static_cast<float>(get_number(w["w1"], "weights.w1"));
        if (w.contains("w2")) cfg.weights.w2 = static_cast<float>(get_number(w["w2"], "weights.w2"));
        if (w.contains("w3")) cfg.weights.w3 = static_cast<float>(get_number(w["w3"], "weights.w3"));
        if (w.contains("w4")) cfg.weights.w4 = static_cast<float>(get_number(w["w4"], "weights.w4"));
    }

    // Derived fields: the leader model spans the capture, both backends
    // predict over the scene's class set.
    cfg.leader.transformer.input_size = cfg.capture_size;
    cfg.leader.transformer.num_classes = cfg.scene.num_classes;
    cfg.follower.cnn.num_classes = cfg.scene.num_classes;

    cfg.validate();
    return cfg;
}

MissionConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        is >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return parse_config(doc);
}

nlohmann::ordered_json config_to_json(const MissionConfig& cfg) {
    ordered_json doc;
    doc["seed"] = cfg.seed;
    doc["rounds"] = cfg.rounds;
    doc["followers"] = cfg.followers;
    doc["fusion"] = to_string(cfg.fusion);
    doc["selection"] = to_string(cfg.selection);
    doc["tta"] = to_string(cfg.tta);
    doc["aggregate"] = to_string(cfg.aggregate);
    doc["alpha"] = cfg.alpha;
    doc["capture_size"] = cfg.capture_size;
    doc["scene"] = {{"width", cfg.scene.width},
                    {"height", cfg.scene.height},
                    {"num_classes", cfg.scene.num_classes}};
    ordered_json corruption;
    corruption["kind"] = cfg.corruption ? corruption_name(*cfg.corruption) : "none";
    corruption["severity"] = cfg.severity;
    if (!cfg.schedule.empty()) {
        ordered_json steps = ordered_json::array();
        for (const auto& s : cfg.schedule) {
            steps.push_back({{"round", s.from_round},
                             {"kind", s.kind ? corruption_name(*s.kind) : "none"},
                             {"severity", s.severity}});
        }
        corruption["schedule"] = steps;
    }
    doc["corruption"] = corruption;

    ordered_json leader;
    leader["backend"] = to_string(cfg.leader.kind);
    if (cfg.leader.kind == BackendKind::Transformer) {
        leader["transformer"] = {{"dim_divisor", cfg.leader.transformer.dim_divisor},
                                 {"mlp_ratio", cfg.leader.transformer.mlp_ratio}};
    } else {
        leader["oracle"] = {{"accuracy", cfg.leader.oracle.accuracy},
                            {"confidence", cfg.leader.oracle.confidence}};
        if (cfg.leader.hotspot) {
            leader["hotspot"] = {{"x0", cfg.leader.hotspot->x0},
                                 {"y0", cfg.leader.hotspot->y0},
                                 {"x1", cfg.leader.hotspot->x1},
                                 {"y1", cfg.leader.hotspot->y1},
                                 {"accuracy", cfg.leader.hotspot_accuracy}};
        }
    }
    doc["leader"] = leader;

    ordered_json follower;
    follower["backend"] = to_string(cfg.follower.kind);
    if (cfg.follower.kind == BackendKind::Cnn) {
        ordered_json layers = ordered_json::array();
        for (const auto& l : cfg.follower.cnn.layers) {
            layers.push_back({l.out_channels, l.kernel, l.stride});
        }
        follower["cnn"] = {{"input_size", cfg.follower.cnn.input_size}, {"layers", layers}};
    } else {
        follower["oracle"] = {{"accuracy", cfg.follower.oracle.accuracy},
                              {"confidence", cfg.follower.oracle.confidence}};
    }
    doc["follower"] = follower;

    doc["network"] = {{"bandwidth_bytes_per_s", cfg.network.bandwidth_bytes_per_s},
                      {"rtt_s", cfg.network.rtt_s},
                      {"loss_rate", cfg.network.loss_rate},
                      {"seed", cfg.network.seed}};
    doc["compute"] = {{"leader_flops_per_s", cfg.compute.leader_flops_per_s},
                      {"follower_flops_per_s", cfg.compute.follower_flops_per_s},
                      {"oracle_flops_per_pixel", cfg.compute.oracle_flops_per_pixel},
                      {"fusion_flops_per_pixel", cfg.compute.fusion_flops_per_pixel}};
    doc["weights"] = {{"w1", cfg.weights.w1},
                      {"w2", cfg.weights.w2},
                      {"w3", cfg.weights.w3},
                      {"w4", cfg.weights.w4}};
    return doc;
}

MissionConfig config_from_report(const std::filesystem::path& report_path) {
    std::ifstream is(report_path);
    if (!is) throw ConfigError("cannot open report " + report_path.string());
    json doc;
    is >> doc;
    if (!doc.contains("config")) throw ConfigError("report carries no config section");
    return parse_config(doc["config"]);
}

void apply_override(MissionConfig& cfg, const std::string& key, const std::string& value) {
    auto as_uint = [&](const char* what) -> uint64_t {
        try {
            size_t pos = 0;
            uint64_t v = std::stoull(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + " expects a non-negative integer, got '" + value + "'");
        }
    };
    auto as_double = [&](const char* what) -> double {
        try {
            size_t pos = 0;
            double v = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + " expects a number, got '" + value + "'");
        }
    };

    if (key == "seed") {
        cfg.seed = as_uint("seed");
    } else if (key == "rounds") {
        cfg.rounds = static_cast<uint32_t>(as_uint("rounds"));
    } else if (key == "followers") {
        cfg.followers = as_uint("followers");
    } else if (key == "fusion") {
        cfg.fusion = parse_fusion(value);
    } else if (key == "selection") {
        cfg.selection = parse_selection(value);
    } else if (key == "tta") {
        cfg.tta = parse_tta(value);
    } else if (key == "aggregate") {
        cfg.aggregate = parse_aggregate(value);
    } else if (key == "corruption") {
        cfg.corruption = parse_corruption_kind(value, "corruption");
    } else if (key == "severity") {
        cfg.severity = static_cast<int>(as_uint("severity"));
    } else if (key == "alpha") {
        cfg.alpha = static_cast<float>(as_double("alpha"));
    } else {
        throw ConfigError("unknown override key: " + key +
                          " (allowed: seed, rounds, followers, fusion, selection, tta, aggregate, "
                          "corruption, severity, alpha)");
    }
}

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        os << content;
        if (!os) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

ordered_json round_to_json(const RoundReport& r) {
    ordered_json j;
    j["round"] = r.round;
    j["corruption"] = r.corruption;
    j["severity"] = r.severity;
    j["miou_coarse"] = r.miou_coarse;
    j["miou_fused"] = r.miou_fused;
    j["latency_s"] = {{"leader_inference", r.t_leader_inference},
                      {"assignment_tx", r.t_assignment_tx},
                      {"follower_inference", r.t_follower_inference},
                      {"refinement_tx", r.t_refinement_tx},
                      {"fusion", r.t_fusion},
                      {"tta_exchange", r.t_tta_exchange},
                      {"total", r.t_total}};
    j["bytes"] = {{"assign_volume", r.assign_volume},
                  {"assign_framing", r.assign_framing},
                  {"refinement_volume", r.refinement_volume},
                  {"refinement_framing", r.refinement_framing},
                  {"stat_volume", r.stat_volume},
                  {"stat_framing", r.stat_framing},
                  {"stat_volume_per_follower", r.stat_volume_per_follower}};
    j["selected"] = r.selected;
    j["refinements"] = {{"assigned", r.refinements_assigned}, {"received", r.refinements_received}};
    ordered_json links = ordered_json::array();
    for (const auto& l : r.links) links.push_back({l.sender, l.recipient, l.bytes});
    j["links"] = links;
    return j;
}

std::string rounds_csv(const std::string& run_id, const std::vector<RoundReport>& rounds) {
    std::ostringstream os;
    os << "run_id,round,corruption,severity,miou_coarse,miou_fused,latency_total_s,"
          "leader_inference_s,assignment_tx_s,follower_inference_s,refinement_tx_s,fusion_s,"
          "tta_exchange_s,assign_volume,refinement_volume,stat_volume,stat_volume_per_follower\n";
    for (const auto& r : rounds) {
        os << run_id << ',' << r.round << ',' << r.corruption << ',' << r.severity << ','
           << format_double(r.miou_coarse) << ',' << format_double(r.miou_fused) << ','
           << format_double(r.t_total) << ',' << format_double(r.t_leader_inference) << ','
           << format_double(r.t_assignment_tx) << ',' << format_double(r.t_follower_inference) << ','
           << format_double(r.t_refinement_tx) << ',' << format_double(r.t_fusion) << ','
           << format_double(r.t_tta_exchange) << ',' << r.assign_volume << ','
           << r.refinement_volume << ',' << r.stat_volume << ',' << r.stat_volume_per_follower
           << '\n';
    }
    return os.str();
}

}  // namespace

int log_level() {
    static int level = [] {
        const char* env = std::getenv("SKYSEG_LOG");
        if (!env || !*env) return 0;
        return std::atoi(env);
    }();
    return level;
}

void log_line(int level, const std::string& text) {
    if (log_level() >= level) std::fprintf(stderr, "[skyseg] %s\n", text.c_str());
}

RunSummary run_scenario(const MissionConfig& cfg, const std::filesystem::path& out_dir,
                        const std::string& run_id) {
    std::filesystem::path dir = out_dir / run_id;
    std::filesystem::create_directories(dir);

    log_line(1, "running " + run_id + ": rounds=" + std::to_string(cfg.rounds) +
                    " followers=" + std::to_string(cfg.followers));

    std::ostringstream msglog;
    Mission mission(cfg);
    mission.set_message_log(&msglog);
    std::vector<RoundReport> rounds = mission.run();

    RunSummary summary;
    summary.run_id = run_id;
    for (const auto& r : rounds) {
        summary.mean_miou_coarse += r.miou_coarse;
        summary.mean_miou_fused += r.miou_fused;
        summary.mean_total_latency_s += r.t_total;
        log_line(2, "round " + std::to_string(r.round) + ": coarse=" + format_double(r.miou_coarse) +
                        " fused=" + format_double(r.miou_fused));
    }
    if (!rounds.empty()) {
        double n = static_cast<double>(rounds.size());
        summary.mean_miou_coarse /= n;
        summary.mean_miou_fused /= n;
        summary.mean_total_latency_s /= n;
    }
    if (cfg.followers > 0) {
        summary.refinement_volume_per_patch =
            volume_refinement(cfg.scene.height / 2, cfg.scene.width / 2);
        if (cfg.follower.kind == BackendKind::Cnn && cfg.tta == TtaMode::Cross && cfg.followers > 1) {
            summary.stat_volume_per_follower =
                (cfg.followers - 1) * volume_stats(cfg.follower.cnn.total_bn_channels());
        }
    }

    ordered_json doc;
    doc["run_id"] = run_id;
    doc["config"] = config_to_json(cfg);
    ordered_json round_array = ordered_json::array();
    for (const auto& r : rounds) round_array.push_back(round_to_json(r));
    doc["rounds"] = round_array;
    doc["summary"] = {{"rounds", rounds.size()},
                      {"mean_miou_coarse", summary.mean_miou_coarse},
                      {"mean_miou_fused", summary.mean_miou_fused},
                      {"mean_total_latency_s", summary.mean_total_latency_s},
                      {"refinement_volume_per_patch", summary.refinement_volume_per_patch},
                      {"stat_volume_per_follower", summary.stat_volume_per_follower}};

    summary.report_path = dir / "report.json";
    summary.csv_path = dir / "rounds.csv";
    write_atomic(summary.report_path, doc.dump(2) + "\n");
    write_atomic(summary.csv_path, rounds_csv(run_id, rounds));
    write_atomic(dir / "messages.log", msglog.str());
    return summary;
}

std::vector<RunSummary> run_sweep(const MissionConfig& base, const std::vector<SweepAxis>& axes,
                                  const std::filesystem::path& out_dir) {
    if (axes.empty()) throw ConfigError("sweep needs at least one axis");
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw ConfigError("sweep axis '" + axis.key + "' has no values");
    }

    size_t cells = 1;
    for (const auto& axis : axes) cells *= axis.values.size();

    std::vector<RunSummary> summaries;
    std::vector<size_t> index(axes.size(), 0);
    for (size_t cell = 0; cell < cells; ++cell) {
        MissionConfig cfg = base;
        std::string label;
        for (size_t a = 0; a < axes.size(); ++a) {
            const std::string& value = axes[a].values[index[a]];
            apply_override(cfg, axes[a].key, value);
            label += "_" + axes[a].key + "=" + value;
        }
        char id[32];
        std::snprintf(id, sizeof(id), "cell_%03zu", cell);
        summaries.push_back(run_scenario(cfg, out_dir, id + label));

        for (size_t a = axes.size(); a-- > 0;) {
            if (++index[a] < axes[a].values.size()) break;
            index[a] = 0;
        }
    }

    ordered_json table = ordered_json::array();
    std::ostringstream csv;
    csv << "run_id,mean_miou_coarse,mean_miou_fused,mean_total_latency_s,"
           "refinement_volume_per_patch,stat_volume_per_follower\n";
    for (const auto& s : summaries) {
        table.push_back({{"run_id", s.run_id},
                         {"mean_miou_coarse", s.mean_miou_coarse},
                         {"mean_miou_fused", s.mean_miou_fused},
                         {"mean_total_latency_s", s.mean_total_latency_s},
                         {"refinement_volume_per_patch", s.refinement_volume_per_patch},
                         {"stat_volume_per_follower", s.stat_volume_per_follower}});
        csv << s.run_id << ',' << format_double(s.mean_miou_coarse) << ','
            << format_double(s.mean_miou_fused) << ',' << format_double(s.mean_total_latency_s)
            << ',' << s.refinement_volume_per_patch << ',' << s.stat_volume_per_follower << '\n';
    }
    std::filesystem::create_directories(out_dir);
    ordered_json doc;
    doc["cells"] = table;
    write_atomic(out_dir / "summary.json", doc.dump(2) + "\n");
    write_atomic(out_dir / "summary.csv", csv.str());
    return summaries;
}

}  // namespace skyseg
