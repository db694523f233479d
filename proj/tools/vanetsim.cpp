// vanetsim: command-line front end for the VANET toolkit. Generates road
// maps, produces mobility traces, runs the wireless network simulation, and
// drives the delivery-ratio experiment matrix.
//
// Exit codes: 0 success, 1 validation findings, 2 invalid configuration,
// 3 input parse failure, 4 simulation or output failure.
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vanetsim/core.hpp"
#include "vanetsim/demand.hpp"
#include "vanetsim/map_gen.hpp"
#include "vanetsim/metrics.hpp"
#include "vanetsim/mobility.hpp"
#include "vanetsim/net_sim.hpp"
#include "vanetsim/road_net.hpp"
#include "vanetsim/trace_io.hpp"

using namespace vanet;
using nlohmann::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_findings = 1;
constexpr int exit_config = 2;
constexpr int exit_parse = 3;
constexpr int exit_sim = 4;

/// Failures in the simulation / output phase, mapped to exit code 4.
struct SimFailure {
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimFailure{"cannot create " + path};
    out << content;
    out.flush();
    if (!out) throw SimFailure{"cannot write " + path};
}

/// Runs the heavy phase of a command; library errors there are simulation
/// failures, not configuration mistakes.
template <typename F>
auto sim_phase(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw SimFailure{e.what()};
    }
}

/// VF_SEED environment override, applied on top of config files and flags.
std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("VF_SEED");
    if (!v || !*v) return std::nullopt;
    char* end = nullptr;
    errno = 0;
    const unsigned long long parsed = std::strtoull(v, &end, 10);
    if (errno != 0 || end == v || *end != '\0')
        throw Error("VF_SEED must be an unsigned 64-bit integer, got '" + std::string(v) + "'");
    return static_cast<std::uint64_t>(parsed);
}

/// Number parsing for flag values; failures are configuration errors.
double flag_num(const std::string& flag, const std::string& tok) {
    try {
        return parse_double(tok, 0);
    } catch (const Error&) {
        throw Error(flag + ": bad number '" + tok + "'");
    }
}

std::vector<double> flag_numbers(const std::string& flag, const std::string& s,
                                 std::size_t expect) {
    const auto parts = split_char(s, ',');
    if (parts.size() != expect)
        throw Error(flag + ": expected " + std::to_string(expect) +
                    " comma-separated values, got " + std::to_string(parts.size()));
    std::vector<double> out;
    out.reserve(parts.size());
    for (const auto& p : parts) out.push_back(flag_num(flag, p));
    return out;
}

// ---------------------------------------------------------------------------
// JSON scenario config (schema documented in the README)
// ---------------------------------------------------------------------------

json load_json(const std::string& path) {
    const std::string text = read_file(path);
    return json::parse(text); // json::parse_error maps to exit 3
}

template <typename T>
void jset(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void apply_radio(const json& j, RadioParams& r) {
    jset(j, "pl_exponent", r.pl_exponent);
    jset(j, "shadow_sigma", r.shadow_sigma);
    jset(j, "ref_dist", r.ref_dist);
    jset(j, "ref_loss", r.ref_loss);
    jset(j, "tx_power", r.tx_power);
    jset(j, "rx_threshold", r.rx_threshold);
    jset(j, "cs_threshold", r.cs_threshold);
    jset(j, "bitrate", r.bitrate);
}

void apply_aodv(const json& j, AodvConfig& a) {
    jset(j, "intermediate_rrep", a.intermediate_rrep);
    jset(j, "rreq_rounds", a.rreq_rounds);
    jset(j, "round_timeout", a.round_timeout);
    jset(j, "route_lifetime", a.route_lifetime);
    jset(j, "net_ttl", a.net_ttl);
    jset(j, "buffer_limit", a.buffer_limit);
    jset(j, "ifq_limit", a.ifq_limit);
    jset(j, "rreq_accept_margin", a.rreq_accept_margin);
    jset(j, "local_repair", a.local_repair);
    jset(j, "expanding_ring", a.expanding_ring);
}

void apply_vehicle(const json& j, VehicleParams& v) {
    jset(j, "accel", v.accel);
    jset(j, "decel", v.decel);
    jset(j, "v_max", v.v_max);
    jset(j, "length", v.length);
    jset(j, "tau", v.tau);
    jset(j, "sigma_driver", v.sigma_driver);
}

/// Map source: {"file": path} | {"grid": {"k","block"}} |
/// {"spider": {"arms","circles","step"}} |
/// {"random": {"n","width","height","degree","seed"?}} |
/// {"kml": path, "links": path}, plus "traffic_lights": bool.
RoadNetwork map_from_json(const json& m, std::uint64_t seed) {
    RoadNetwork net;
    if (m.contains("file")) {
        net = parse_network(read_file(m.at("file").get<std::string>()));
    } else if (m.contains("grid")) {
        const json& g = m.at("grid");
        GridSpec spec;
        jset(g, "k", spec.k);
        jset(g, "block", spec.block_len);
        net = generate_grid(spec);
    } else if (m.contains("spider")) {
        const json& g = m.at("spider");
        SpiderSpec spec;
        jset(g, "arms", spec.arms);
        jset(g, "circles", spec.circles);
        jset(g, "step", spec.radius_step);
        net = generate_spider(spec);
    } else if (m.contains("random")) {
        const json& g = m.at("random");
        RandomMapSpec spec;
        spec.seed = derive_seed(seed, "map");
        jset(g, "n", spec.n_nodes);
        jset(g, "width", spec.width);
        jset(g, "height", spec.height);
        jset(g, "degree", spec.target_degree);
        jset(g, "seed", spec.seed);
        net = generate_random(spec);
    } else if (m.contains("kml")) {
        if (!m.contains("links")) throw Error("map: \"kml\" needs a \"links\" file");
        const KmlDocument doc = parse_kml(read_file(m.at("kml").get<std::string>()));
        const auto links = parse_link_list(read_file(m.at("links").get<std::string>()));
        net = project_kml(doc, links);
    } else {
        throw Error("map: need one of \"file\", \"grid\", \"spider\", \"random\", \"kml\"");
    }
    if (m.value("traffic_lights", false)) net = promote_traffic_lights(net);
    return net;
}

/// Demand source: {"file": path} | {"random_trips": {"n","begin","end"}}.
std::vector<Trip> demand_from_json(const RoadNetwork& net, const json& d,
                                   std::uint64_t seed) {
    if (d.contains("file"))
        return expand_demand(net, parse_demand(read_file(d.at("file").get<std::string>())));
    if (d.contains("random_trips")) {
        const json& r = d.at("random_trips");
        int n = 0;
        double begin = 0.0, end = 0.0;
        jset(r, "n", n);
        jset(r, "begin", begin);
        jset(r, "end", end);
        return random_trips(net, n, begin, end, derive_seed(seed, "demand"));
    }
    throw Error("demand: need \"file\" or \"random_trips\"");
}

void apply_experiment(const json& j, ExperimentConfig& cfg) {
    if (auto it = j.find("kinds"); it != j.end()) {
        cfg.kinds.clear();
        for (const auto& k : *it) cfg.kinds.push_back(parse_mobility_kind(k.get<std::string>()));
    }
    jset(j, "source_counts", cfg.source_counts);
    jset(j, "seeds", cfg.seeds);
    jset(j, "n_nodes", cfg.n_nodes);
    jset(j, "width", cfg.width);
    jset(j, "height", cfg.height);
    jset(j, "duration", cfg.duration);
    jset(j, "payload", cfg.payload);
    jset(j, "rate", cfg.rate);
    jset(j, "start_window", cfg.start_window);
    jset(j, "v_min", cfg.v_min);
    jset(j, "v_max", cfg.v_max);
    jset(j, "pause", cfg.pause);
    jset(j, "grid_block", cfg.grid_block);
    jset(j, "traffic_lights", cfg.traffic_lights);
    jset(j, "depart_window", cfg.depart_window);
    jset(j, "dt", cfg.dt);
    jset(j, "jobs", cfg.jobs);
    if (auto it = j.find("radio"); it != j.end()) apply_radio(*it, cfg.radio);
    if (auto it = j.find("aodv"); it != j.end()) apply_aodv(*it, cfg.aodv);
    if (auto it = j.find("vehicle"); it != j.end()) apply_vehicle(*it, cfg.vehicle);
}

// ---------------------------------------------------------------------------
// genmap
// ---------------------------------------------------------------------------

struct GenmapArgs {
    std::string grid, spider, random, kml, links;
    bool traffic_lights = false;
    std::string out = "map.net";
};

int cmd_genmap(const GenmapArgs& a) {
    const int sources = (!a.grid.empty()) + (!a.spider.empty()) + (!a.random.empty()) +
                        (!a.kml.empty());
    if (sources != 1)
        throw Error("genmap needs exactly one of --grid, --spider, --random, --kml");

    RoadNetwork net;
    if (!a.grid.empty()) {
        const auto v = flag_numbers("--grid", a.grid, 2);
        GridSpec spec;
        spec.k = static_cast<int>(v[0]);
        spec.block_len = v[1];
        net = generate_grid(spec);
    } else if (!a.spider.empty()) {
        const auto v = flag_numbers("--spider", a.spider, 3);
        SpiderSpec spec;
        spec.arms = static_cast<int>(v[0]);
        spec.circles = static_cast<int>(v[1]);
        spec.radius_step = v[2];
        net = generate_spider(spec);
    } else if (!a.random.empty()) {
        const auto v = flag_numbers("--random", a.random, 5);
        RandomMapSpec spec;
        spec.n_nodes = static_cast<int>(v[0]);
        spec.width = v[1];
        spec.height = v[2];
        spec.target_degree = static_cast<int>(v[3]);
        spec.seed = static_cast<std::uint64_t>(v[4]);
        if (auto s = env_seed()) spec.seed = derive_seed(*s, "map");
        net = generate_random(spec);
    } else {
        if (a.links.empty()) throw Error("--kml needs --links");
        const KmlDocument doc = parse_kml(read_file(a.kml));
        const auto links = parse_link_list(read_file(a.links));
        net = project_kml(doc, links);
    }
    if (a.traffic_lights) net = promote_traffic_lights(net);

    write_file(a.out, write_network(net));
    std::cout << "nodes " << net.nodes().size() << " edges " << net.edges().size() << "\n";
    std::cout << "wrote " << a.out << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// mobility
// ---------------------------------------------------------------------------

struct MobilityArgs {
    std::string config, net_file, demand_file, rwp;
    double duration = -1.0;
    double dt = -1.0;
    std::uint64_t seed = 1;
    bool seed_given = false;
    std::string out = "trace.tcl";
    std::string csv, node_map;
};

void apply_rwp_kv(const std::string& s, RwpSpec& spec) {
    for (const auto& item : split_char(s, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error("--rwp: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        const double x = flag_num("--rwp " + key, val);
        if (key == "n")
            spec.n_nodes = static_cast<int>(x);
        else if (key == "w")
            spec.width = x;
        else if (key == "h")
            spec.height = x;
        else if (key == "vmin")
            spec.v_min = x;
        else if (key == "vmax")
            spec.v_max = x;
        else if (key == "pause")
            spec.pause = x;
        else if (key == "dur")
            spec.duration = x;
        else
            throw Error("--rwp: unknown key '" + key + "' (use n,w,h,vmin,vmax,pause,dur)");
    }
}

int cmd_mobility(const MobilityArgs& a) {
    const json cfg = a.config.empty() ? json::object() : load_json(a.config);

    std::uint64_t seed = 1;
    jset(cfg, "seed", seed);
    if (a.seed_given) seed = a.seed;
    if (auto s = env_seed()) seed = *s;

    const bool rwp_mode =
        !a.rwp.empty() ||
        (cfg.contains("mobility") && cfg.at("mobility").value("kind", "") == "rwp");

    MobilityTrace trace;
    if (rwp_mode) {
        RwpSpec spec;
        if (cfg.contains("mobility")) {
            const json& m = cfg.at("mobility");
            jset(m, "n", spec.n_nodes);
            jset(m, "width", spec.width);
            jset(m, "height", spec.height);
            jset(m, "v_min", spec.v_min);
            jset(m, "v_max", spec.v_max);
            jset(m, "pause", spec.pause);
        }
        jset(cfg, "duration", spec.duration);
        if (!a.rwp.empty()) apply_rwp_kv(a.rwp, spec);
        if (a.duration >= 0) spec.duration = a.duration;
        spec.seed = derive_seed(seed, "mobility");
        spec.check();
        trace = sim_phase([&] { return random_waypoint(spec); });
    } else {
        RoadNetwork net;
        if (!a.net_file.empty())
            net = parse_network(read_file(a.net_file));
        else if (cfg.contains("map"))
            net = map_from_json(cfg.at("map"), seed);
        else
            throw Error("mobility needs a map: --net FILE or a config with \"map\"");

        std::vector<Trip> trips;
        if (!a.demand_file.empty())
            trips = expand_demand(net, parse_demand(read_file(a.demand_file)));
        else if (cfg.contains("demand"))
            trips = demand_from_json(net, cfg.at("demand"), seed);
        else
            throw Error("mobility needs demand: --demand FILE or a config with \"demand\"");

        VehicleParams vehicle;
        if (cfg.contains("vehicle")) apply_vehicle(cfg.at("vehicle"), vehicle);
        double duration = -1.0;
        jset(cfg, "duration", duration);
        if (a.duration >= 0) duration = a.duration;
        if (duration < 0) throw Error("mobility needs --duration (or \"duration\" in the config)");
        double dt = 1.0;
        jset(cfg, "dt", dt);
        if (a.dt > 0) dt = a.dt;
        vehicle.check();
        trace = sim_phase([&] {
            return simulate_traffic(net, trips, vehicle, dt, duration,
                                    derive_seed(seed, "mobility"));
        });
    }

    sim_phase([&] {
        write_file(a.out, write_ns2(trace));
        return 0;
    });
    if (!a.csv.empty()) write_file(a.csv, write_csv(trace));
    if (!a.node_map.empty()) write_file(a.node_map, write_node_map(trace));

    std::cout << "nodes " << trace.nodes.size() << " duration " << num_str(trace.duration)
              << "\n";
    std::cout << "wrote " << a.out << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// netsim
// ---------------------------------------------------------------------------

struct NetsimArgs {
    std::string config, trace_file;
    std::vector<std::string> flow_strs;
    int sources = 0;
    int payload = 64;
    double rate = 4.0;
    double start = 0.0;
    double duration = -1.0;
    std::uint64_t seed = 1;
    bool seed_given = false;
    RadioParams radio;
    bool intermediate_rrep = false;
    double rreq_margin = 0.0;
    bool local_repair = false;
    bool expanding_ring = false;
    std::string out = "packets.csv";
};

int cmd_netsim(const NetsimArgs& a) {
    const json cfg = a.config.empty() ? json::object() : load_json(a.config);

    std::uint64_t seed = 1;
    jset(cfg, "seed", seed);
    if (a.seed_given) seed = a.seed;
    if (auto s = env_seed()) seed = *s;

    if (a.trace_file.empty()) throw Error("netsim needs --trace FILE");
    const MobilityTrace trace = parse_ns2(read_file(a.trace_file));
    const int n_nodes = static_cast<int>(trace.nodes.size());

    double duration = trace.duration;
    jset(cfg, "duration", duration);
    if (a.duration >= 0) duration = a.duration;

    RadioParams radio = a.radio;
    if (auto it = cfg.find("radio"); it != cfg.end()) {
        radio = RadioParams{};
        apply_radio(*it, radio);
    }

    AodvConfig aodv;
    if (auto it = cfg.find("aodv"); it != cfg.end()) apply_aodv(*it, aodv);
    if (a.intermediate_rrep) aodv.intermediate_rrep = true;
    if (a.rreq_margin > 0) aodv.rreq_accept_margin = a.rreq_margin;
    if (a.local_repair) aodv.local_repair = true;
    if (a.expanding_ring) aodv.expanding_ring = true;

    int payload = a.payload;
    double rate = a.rate;
    int sources = a.sources;
    if (auto it = cfg.find("flows"); it != cfg.end()) {
        jset(*it, "payload", payload);
        jset(*it, "rate", rate);
        if (sources == 0) jset(*it, "n_sources", sources);
    }

    std::vector<CbrFlow> flows;
    if (!a.flow_strs.empty()) {
        for (const auto& fs : a.flow_strs) {
            const auto v = flag_numbers("--flow", fs, 2);
            CbrFlow f;
            f.src = static_cast<int>(v[0]);
            f.dst = static_cast<int>(v[1]);
            f.payload = payload;
            f.rate = rate;
            f.start = a.start;
            f.stop = duration;
            flows.push_back(f);
        }
    } else if (sources > 0) {
        flows = experiment_flows(n_nodes, sources, payload, rate, duration,
                                 derive_seed(seed, "flows"));
        for (auto& f : flows) f.start += a.start;
    } else {
        throw Error("netsim needs traffic: --flow SRC,DST or --sources N");
    }
    for (const auto& f : flows) {
        if (f.src < 0 || f.src >= n_nodes || f.dst < 0 || f.dst >= n_nodes)
            throw Error("flow " + std::to_string(f.src) + "," + std::to_string(f.dst) +
                        ": node id outside the trace (0.." + std::to_string(n_nodes - 1) + ")");
        f.check();
    }
    radio.check();
    aodv.check();

    const SimOutput out = sim_phase([&] {
        return simulate_network(trace, flows, radio, aodv, duration, derive_seed(seed, "radio"));
    });

    std::cout << "netsim: " << n_nodes << " nodes, " << flows.size() << " flows, duration "
              << num_str(duration) << " s, path loss n=" << num_str(radio.pl_exponent)
              << " sigma=" << num_str(radio.shadow_sigma) << ", bitrate "
              << num_str(radio.bitrate) << " bit/s\n";
    const std::size_t sent = out.log.sent();
    const std::size_t received = out.log.received();
    char line[128];
    std::snprintf(line, sizeof line, "PDR %.2f (%zu/%zu)\n",
                  sent ? static_cast<double>(received) / static_cast<double>(sent) : 0.0,
                  received, sent);
    std::cout << line;

    write_file(a.out, write_packet_log(out.log));
    std::cout << "wrote " << a.out << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

struct ExperimentArgs {
    bool paper = false, desk = false;
    std::string config;
    int jobs = 0;
    std::string runs_csv = "runs.csv";
    std::string summary_csv = "summary.csv";
};

int cmd_experiment(const ExperimentArgs& a) {
    if (!a.paper && !a.desk && a.config.empty())
        throw Error("experiment needs --paper, --desk, or --config FILE");
    if (a.paper && a.desk) throw Error("--paper and --desk are mutually exclusive");

    ExperimentConfig cfg = a.desk ? desk_experiment() : full_experiment();
    if (!a.config.empty()) apply_experiment(load_json(a.config), cfg);
    if (a.jobs > 0) cfg.jobs = a.jobs;
    if (auto s = env_seed()) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            cfg.seeds[i] = derive_seed(*s, "run", static_cast<std::uint64_t>(i));
        std::cerr << "seeds overridden by VF_SEED=" << *s << "\n";
    }
    cfg.check();

    std::mutex progress_mutex;
    const ExperimentOutput out = sim_phase([&] {
        return run_experiment(cfg, [&](const RunResult& r) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            std::cerr << "run kind=" << mobility_kind_name(r.kind) << " sources=" << r.n_sources
                      << " seed=" << r.seed << " pdr=" << num_str(r.pdr) << "\n";
        });
    });

    write_file(a.runs_csv, write_run_results(out.runs));
    write_file(a.summary_csv, write_aggregates(out.summary));

    std::cout << write_aggregates(out.summary);
    std::cout << describe_trends(analyze_trends(out.summary));
    std::cout << "wrote " << a.runs_csv << " and " << a.summary_csv << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateArgs {
    std::string net_file, trace_file;
};

int cmd_validate(const ValidateArgs& a) {
    if (a.net_file.empty() && a.trace_file.empty())
        throw Error("validate needs --net FILE and/or --trace FILE");
    std::size_t findings = 0;
    if (!a.net_file.empty()) {
        const RoadNetwork net = parse_network(read_file(a.net_file));
        for (const auto& v : validate(net)) {
            std::cout << "net: " << v.rule << ": " << v.what << "\n";
            ++findings;
        }
    }
    if (!a.trace_file.empty()) {
        const MobilityTrace trace = parse_ns2(read_file(a.trace_file));
        // Movement files carry 2-decimal numbers; allow for that rounding.
        for (const auto& v : trace_violations(trace, 0.01)) {
            std::cout << "trace: " << v << "\n";
            ++findings;
        }
    }
    if (findings == 0) {
        std::cout << "ok\n";
        return exit_ok;
    }
    std::cout << findings << " finding(s)\n";
    return exit_findings;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"VANET toolkit: road maps, mobility traces, and wireless simulation"};
    app.require_subcommand(1);

    GenmapArgs gm;
    auto* genmap = app.add_subcommand("genmap", "Generate a road network file");
    genmap->add_option("--grid", gm.grid, "k,block: square lattice, k junctions per side");
    genmap->add_option("--spider", gm.spider, "arms,circles,step: ring-and-spoke map");
    genmap->add_option("--random", gm.random, "n,w,h,deg,seed: connected random map");
    genmap->add_option("--kml", gm.kml, "KML placemark file to project");
    genmap->add_option("--links", gm.links, "edge list (link i j) for --kml");
    genmap->add_flag("--traffic-lights", gm.traffic_lights,
                     "signalize junctions with 3+ approaches (two 30 s phases)");
    genmap->add_option("-o,--out", gm.out, "output network file")->capture_default_str();

    MobilityArgs mo;
    auto* mobility = app.add_subcommand("mobility", "Simulate node motion, write an NS-2 trace");
    mobility->add_option("--config", mo.config, "scenario config JSON");
    mobility->add_option("--net", mo.net_file, "road network file");
    mobility->add_option("--demand", mo.demand_file, "demand file (flow/bus/trip lines)");
    mobility->add_option("--rwp", mo.rwp,
                         "random waypoint spec: n=,w=,h=,vmin=,vmax=,pause=,dur=");
    mobility->add_option("--duration", mo.duration, "simulated seconds");
    mobility->add_option("--dt", mo.dt, "microsimulation step (s), default 1");
    auto* mo_seed = mobility->add_option("--seed", mo.seed, "master seed")->capture_default_str();
    mobility->add_option("-o,--out", mo.out, "output trace file")->capture_default_str();
    mobility->add_option("--csv", mo.csv, "also write waypoints as CSV");
    mobility->add_option("--map", mo.node_map, "also write node-index/vehicle-id sidecar");

    NetsimArgs ns;
    auto* netsim = app.add_subcommand("netsim", "Run the wireless simulation over a trace");
    netsim->add_option("--config", ns.config, "scenario config JSON");
    netsim->add_option("--trace", ns.trace_file, "NS-2 mobility trace");
    netsim->add_option("--flow", ns.flow_strs, "src,dst CBR flow (repeatable)");
    netsim->add_option("--sources", ns.sources, "draw this many disjoint flows (seeded)");
    netsim->add_option("--payload", ns.payload, "CBR payload bytes")->capture_default_str();
    netsim->add_option("--rate", ns.rate, "CBR packets per second")->capture_default_str();
    netsim->add_option("--start", ns.start, "offset added to every flow start (s)")
        ->capture_default_str();
    netsim->add_option("--duration", ns.duration, "simulated seconds (default: trace length)");
    auto* ns_seed = netsim->add_option("--seed", ns.seed, "master seed")->capture_default_str();
    netsim->add_option("--pl-exponent", ns.radio.pl_exponent, "path loss exponent")
        ->capture_default_str();
    netsim->add_option("--sigma", ns.radio.shadow_sigma, "shadowing std dev (dB)")
        ->capture_default_str();
    netsim->add_option("--ref-dist", ns.radio.ref_dist, "reference distance (m)")
        ->capture_default_str();
    netsim->add_option("--ref-loss", ns.radio.ref_loss, "loss at reference distance (dB)")
        ->capture_default_str();
    netsim->add_option("--tx-power", ns.radio.tx_power, "transmit power (dBm)")
        ->capture_default_str();
    netsim->add_option("--rx-threshold", ns.radio.rx_threshold, "reception threshold (dBm)")
        ->capture_default_str();
    netsim->add_option("--cs-threshold", ns.radio.cs_threshold, "carrier sense threshold (dBm)")
        ->capture_default_str();
    netsim->add_option("--bitrate", ns.radio.bitrate, "link bitrate (bit/s)")
        ->capture_default_str();
    netsim->add_flag("--intermediate-rrep", ns.intermediate_rrep,
                     "let intermediate nodes answer route requests");
    netsim
        ->add_option("--rreq-margin", ns.rreq_margin,
                     "required dB headroom over rx threshold to accept a route request")
        ->capture_default_str();
    netsim->add_flag("--local-repair", ns.local_repair,
                     "relays mend broken paths in place instead of reporting them dead");
    netsim->add_flag("--expanding-ring", ns.expanding_ring,
                     "search in growing rings (depth 1, 3, network) instead of full floods");
    netsim->add_option("-o,--out", ns.out, "packet log CSV")->capture_default_str();

    ExperimentArgs ex;
    auto* experiment = app.add_subcommand("experiment", "Run the delivery-ratio matrix");
    experiment->add_flag("--paper", ex.paper,
                         "150 nodes, 2000x2000 m, 900 s, sources 10-50, 6 seeds");
    experiment->add_flag("--desk", ex.desk, "50 nodes, 1000x1000 m, 300 s, sources 5-20, 6 seeds");
    experiment->add_option("--config", ex.config, "experiment config JSON (overrides preset)");
    experiment->add_option("--jobs", ex.jobs, "worker threads across runs");
    experiment->add_option("--runs-csv", ex.runs_csv, "per-run output CSV")->capture_default_str();
    experiment->add_option("--summary-csv", ex.summary_csv, "aggregate output CSV")
        ->capture_default_str();

    ValidateArgs va;
    auto* validate_cmd = app.add_subcommand("validate", "Check a network or trace file");
    validate_cmd->add_option("--net", va.net_file, "road network file");
    validate_cmd->add_option("--trace", va.trace_file, "NS-2 mobility trace");

    try {
        app.parse(argc, argv);
        mo.seed_given = mo_seed->count() > 0;
        ns.seed_given = ns_seed->count() > 0;
        if (genmap->parsed()) return cmd_genmap(gm);
        if (mobility->parsed()) return cmd_mobility(mo);
        if (netsim->parsed()) return cmd_netsim(ns);
        if (experiment->parsed()) return cmd_experiment(ex);
        if (validate_cmd->parsed()) return cmd_validate(va);
        return exit_config;
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    } catch (const SimFailure& f) {
        std::cerr << "error: " << f.message << "\n";
        return exit_sim;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_parse;
    } catch (const json::parse_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_parse;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_sim;
    }
}
