// Experiment driver: packet-delivery-ratio metrics over a matrix of
// mobility kinds x source counts x seeds, with deterministic seeding,
// optional worker threads, and CSV output for plotting.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "vanetsim/core.hpp"
#include "vanetsim/demand.hpp"
#include "vanetsim/map_gen.hpp"
#include "vanetsim/mobility.hpp"
#include "vanetsim/net_sim.hpp"
#include "vanetsim/road_net.hpp"

namespace vanet {

// ---------------------------------------------------------------------------
// Packet delivery ratio
// ---------------------------------------------------------------------------

/// Fraction of injected packets that reached their destination. A log with
/// zero sent packets has no defined ratio and is reported as an error, never
/// as 0 or 1.
inline double pdr(const PacketLog& log) {
    const std::size_t sent = log.sent();
    if (sent == 0) throw Error("pdr: no packets were sent");
    return static_cast<double>(log.received()) / static_cast<double>(sent);
}

// ---------------------------------------------------------------------------
// Run results and aggregation
// ---------------------------------------------------------------------------

enum class MobilityKind { move, rwp };

inline const char* mobility_kind_name(MobilityKind k) {
    return k == MobilityKind::move ? "move" : "rwp";
}

inline MobilityKind parse_mobility_kind(const std::string& s) {
    if (s == "move") return MobilityKind::move;
    if (s == "rwp") return MobilityKind::rwp;
    throw Error("unknown mobility kind: " + s + " (expected move or rwp)");
}

/// One cell of the experiment matrix: a single network simulation.
struct RunResult {
    MobilityKind kind = MobilityKind::rwp;
    int n_sources = 0;
    std::uint64_t seed = 0;
    std::size_t sent = 0;
    std::size_t received = 0;
    double pdr = 0.0;
};

/// Per-(kind, source count) summary across seeds.
struct AggregateRow {
    MobilityKind kind = MobilityKind::rwp;
    int n_sources = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    int n_runs = 0;
};

/// Groups runs by (kind, n_sources) and reports mean/min/max delivery ratio.
/// Rows come out sorted by kind then source count; the grouping is
/// insensitive to the order of the input runs.
inline std::vector<AggregateRow> aggregate(const std::vector<RunResult>& runs) {
    std::map<std::pair<int, int>, std::vector<double>> groups;
    for (const auto& r : runs)
        groups[{static_cast<int>(r.kind), r.n_sources}].push_back(r.pdr);
    std::vector<AggregateRow> rows;
    rows.reserve(groups.size());
    for (auto& [key, vals] : groups) {
        // Summing in value order makes the mean independent of run order.
        std::sort(vals.begin(), vals.end());
        AggregateRow row;
        row.kind = static_cast<MobilityKind>(key.first);
        row.n_sources = key.second;
        row.n_runs = static_cast<int>(vals.size());
        row.min = vals.front();
        row.max = vals.back();
        double sum = 0.0;
        for (double v : vals) sum += v;
        row.mean = sum / static_cast<double>(vals.size());
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Schema: kind,n_sources,seed,sent,received,pdr (one row per run).
inline std::string write_run_results(const std::vector<RunResult>& runs) {
    std::string out = "kind,n_sources,seed,sent,received,pdr\n";
    for (const auto& r : runs) {
        out += mobility_kind_name(r.kind);
        out += ',';
        out += std::to_string(r.n_sources);
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(r.sent);
        out += ',';
        out += std::to_string(r.received);
        out += ',';
        out += num_str(r.pdr);
        out += '\n';
    }
    return out;
}

/// Schema: kind,n_sources,mean,min,max,n_runs. Plot n_sources on the x axis,
/// mean on the y axis, and [min, max] as the error bars.
inline std::string write_aggregates(const std::vector<AggregateRow>& rows) {
    std::string out = "kind,n_sources,mean,min,max,n_runs\n";
    for (const auto& r : rows) {
        out += mobility_kind_name(r.kind);
        out += ',';
        out += std::to_string(r.n_sources);
        out += ',';
        out += num_str(r.mean);
        out += ',';
        out += num_str(r.min);
        out += ',';
        out += num_str(r.max);
        out += ',';
        out += std::to_string(r.n_runs);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Full description of an experiment matrix. Every run is reproducible from
/// its seed alone: the road map is shared, while trips, node motion, flow
/// endpoints, and radio noise each derive an independent stream from the run
/// seed, so e.g. changing the source count never perturbs node motion.
struct ExperimentConfig {
    std::vector<MobilityKind> kinds{MobilityKind::move, MobilityKind::rwp};
    std::vector<int> source_counts{10, 20, 30, 40, 50};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6};

    // shared scenario geometry and traffic shape
    int n_nodes = 150;
    double width = 2000.0;
    double height = 2000.0;
    double duration = 900.0; // s
    int payload = 64;        // bytes per CBR packet
    double rate = 4.0;       // packets per second per flow
    double start_window = -1.0; // s over which flow starts spread; <0 = duration/10

    // random-waypoint motion
    double v_min = 1.0;  // m/s
    double v_max = 13.9; // m/s
    double pause = 0.0;  // s

    // road-traffic motion: square grid covering the area, vehicles departing
    // inside [0, depart_window]
    double grid_block = 250.0;  // m between junctions
    bool traffic_lights = true; // signalize every 4-way junction
    double depart_window = 0.0; // 0 means duration / 3
    VehicleParams vehicle;
    double dt = 1.0; // s, microsimulation step

    RadioParams radio;
    AodvConfig aodv;

    int jobs = 1; // worker threads for the run matrix

    void check() const {
        if (kinds.empty()) throw Error("experiment: need at least one mobility kind");
        if (source_counts.empty()) throw Error("experiment: need at least one source count");
        if (seeds.empty()) throw Error("experiment: need at least one seed");
        if (n_nodes < 2) throw Error("experiment: need at least two nodes");
        for (int s : source_counts) {
            if (s < 1) throw Error("experiment: source counts must be >= 1");
            if (2 * s > n_nodes)
                throw Error("experiment: " + std::to_string(s) +
                            " flows need " + std::to_string(2 * s) +
                            " distinct endpoints but only " + std::to_string(n_nodes) +
                            " nodes exist");
        }
        if (!(width > 0) || !(height > 0)) throw Error("experiment: area must be positive");
        if (!(duration > 0)) throw Error("experiment: duration must be positive");
        if (!(rate > 0)) throw Error("experiment: rate must be positive");
        if (payload < 1) throw Error("experiment: payload must be >= 1 byte");
        if (!(grid_block > 0)) throw Error("experiment: grid_block must be positive");
        if (!(depart_window >= 0)) throw Error("experiment: depart_window must be >= 0");
        if (jobs < 1) throw Error("experiment: jobs must be >= 1");
        radio.check();
        aodv.check();
        vehicle.check();
    }
};

/// Reference scenario: 150 nodes on 2 km x 2 km for 900 s, 10..50 sources,
/// six seeds per cell. Radio thresholds give roughly a 264 m usable range
/// under the default path-loss law, and intermediate route replies are on.
inline ExperimentConfig full_experiment() {
    ExperimentConfig cfg;
    cfg.radio.rx_threshold = -78.0;
    cfg.radio.cs_threshold = -88.0;
    cfg.aodv.intermediate_rrep = true;
    cfg.aodv.rreq_accept_margin = 4.0;
    cfg.aodv.local_repair = true;
    return cfg;
}

/// Scaled-down variant of the reference scenario that finishes in minutes:
/// 50 nodes on 1 km x 1 km for 300 s, 5..20 sources, six seeds per cell.
inline ExperimentConfig desk_experiment() {
    ExperimentConfig cfg = full_experiment();
    cfg.n_nodes = 50;
    cfg.width = 1000.0;
    cfg.height = 1000.0;
    cfg.duration = 300.0;
    cfg.source_counts = {5, 10, 15, 20};
    return cfg;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

/// Draws `n_sources` constant-bit-rate flows whose 2 * n_sources endpoints
/// are sampled without replacement from [0, n_nodes): every node appears in
/// at most one flow, so no node sources more than one stream.  Consecutive
/// draws form a flow, so for a fixed seed the flow list for a smaller source
/// count is a prefix of the list for a larger one; comparisons across source
/// counts then share their common flows (common random numbers) instead of
/// resampling everything.  Start times are staggered across `start_window`
/// seconds so the route discoveries do not all storm the channel at once;
/// each flow's start depends only on its own index, keeping the prefix
/// property across source counts.
inline std::vector<CbrFlow> experiment_flows(int n_nodes, int n_sources, int payload,
                                             double rate, double duration,
                                             std::uint64_t seed,
                                             double start_window = 0.0) {
    if (2 * n_sources > n_nodes)
        throw Error("experiment flows: not enough nodes for " +
                    std::to_string(n_sources) + " disjoint flows");
    std::vector<int> ids(static_cast<std::size_t>(n_nodes));
    for (int i = 0; i < n_nodes; ++i) ids[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    // partial Fisher-Yates: the first 2 * n_sources slots become the sample
    for (int i = 0; i < 2 * n_sources; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(
                              static_cast<std::uint64_t>(n_nodes - i)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    std::vector<CbrFlow> flows;
    flows.reserve(static_cast<std::size_t>(n_sources));
    constexpr double golden = 0.6180339887498949; // low-discrepancy phase step
    for (int i = 0; i < n_sources; ++i) {
        CbrFlow f;
        f.src = ids[static_cast<std::size_t>(2 * i)];
        f.dst = ids[static_cast<std::size_t>(2 * i + 1)];
        f.payload = payload;
        f.rate = rate;
        // Spread the starts low-discrepancy over the window (at minimum one
        // packet period) so constant-rate flows neither inject in lockstep
        // nor all open with route discoveries at the same instant.
        const double phase = std::fmod(static_cast<double>(i) * golden, 1.0);
        f.start = phase * std::max(start_window, 1.0 / rate);
        f.stop = duration;
        flows.push_back(f);
    }
    return flows;
}

/// The road map every traffic run shares: a square grid sized to cover the
/// configured area, optionally with signalized 4-way junctions.
inline RoadNetwork experiment_road_map(const ExperimentConfig& cfg) {
    GridSpec grid;
    grid.k = std::max(2, static_cast<int>(std::lround(cfg.width / cfg.grid_block)) + 1);
    grid.block_len = cfg.grid_block;
    RoadNetwork net = generate_grid(grid);
    if (cfg.traffic_lights) net = promote_traffic_lights(net);
    return net;
}

/// Node motion for one (kind, seed) cell. Shared across source counts.
inline MobilityTrace experiment_trace(const ExperimentConfig& cfg, MobilityKind kind,
                                      std::uint64_t seed, const RoadNetwork* road_map) {
    if (kind == MobilityKind::rwp) {
        RwpSpec spec;
        spec.n_nodes = cfg.n_nodes;
        spec.width = cfg.width;
        spec.height = cfg.height;
        spec.v_min = cfg.v_min;
        spec.v_max = cfg.v_max;
        spec.pause = cfg.pause;
        spec.duration = cfg.duration;
        spec.seed = derive_seed(seed, "mobility");
        return random_waypoint(spec);
    }
    const double window = cfg.depart_window > 0 ? cfg.depart_window : cfg.duration / 3.0;
    std::vector<Trip> trips =
        random_trips(*road_map, cfg.n_nodes, 0.0, window, derive_seed(seed, "demand"));
    MobilityTrace trace = simulate_traffic(*road_map, trips, cfg.vehicle, cfg.dt,
                                           cfg.duration, derive_seed(seed, "mobility"));
    trace.duration = cfg.duration;
    return trace;
}

struct ExperimentOutput {
    std::vector<RunResult> runs;       // matrix order: kind, then sources, then seed
    std::vector<AggregateRow> summary; // aggregate(runs)
};

namespace detail {

/// Runs f(0..n-1) on `jobs` threads, rethrowing the first worker exception.
template <typename F>
inline void parallel_for(int n, int jobs, F&& f) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (err) return;
            }
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(jobs, n);
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

/// Runs the whole matrix: every kind x source count x seed combination. The
/// result order — and therefore the CSV bytes — depends only on the
/// configuration, never on thread scheduling. `progress`, when set, is
/// called once per finished run (possibly from worker threads).
inline ExperimentOutput run_experiment(
    const ExperimentConfig& cfg,
    const std::function<void(const RunResult&)>& progress = {}) {
    cfg.check();

    const int n_kinds = static_cast<int>(cfg.kinds.size());
    const int n_counts = static_cast<int>(cfg.source_counts.size());
    const int n_seeds = static_cast<int>(cfg.seeds.size());

    const bool wants_traffic =
        std::find(cfg.kinds.begin(), cfg.kinds.end(), MobilityKind::move) != cfg.kinds.end();
    RoadNetwork road_map;
    if (wants_traffic) road_map = experiment_road_map(cfg);

    // phase 1: one trace per (kind, seed), shared by every source count
    std::vector<MobilityTrace> traces(
        static_cast<std::size_t>(n_kinds) * static_cast<std::size_t>(n_seeds));
    detail::parallel_for(n_kinds * n_seeds, cfg.jobs, [&](int i) {
        const int k = i / n_seeds;
        const int s = i % n_seeds;
        traces[static_cast<std::size_t>(i)] = experiment_trace(
            cfg, cfg.kinds[static_cast<std::size_t>(k)],
            cfg.seeds[static_cast<std::size_t>(s)], wants_traffic ? &road_map : nullptr);
    });

    // phase 2: the network simulations
    ExperimentOutput out;
    out.runs.resize(static_cast<std::size_t>(n_kinds) * static_cast<std::size_t>(n_counts) *
                    static_cast<std::size_t>(n_seeds));
    detail::parallel_for(n_kinds * n_counts * n_seeds, cfg.jobs, [&](int i) {
        const int k = i / (n_counts * n_seeds);
        const int c = (i / n_seeds) % n_counts;
        const int s = i % n_seeds;
        const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(s)];
        const int n_sources = cfg.source_counts[static_cast<std::size_t>(c)];
        const MobilityTrace& trace =
            traces[static_cast<std::size_t>(k * n_seeds + s)];
        const double window =
            cfg.start_window >= 0 ? cfg.start_window : cfg.duration / 10.0;
        const std::vector<CbrFlow> flows =
            experiment_flows(cfg.n_nodes, n_sources, cfg.payload, cfg.rate,
                             cfg.duration, derive_seed(seed, "flows"), window);
        const PacketLog log = run_simulation(trace, flows, cfg.radio, cfg.aodv,
                                             cfg.duration, derive_seed(seed, "radio"));
        RunResult r;
        r.kind = cfg.kinds[static_cast<std::size_t>(k)];
        r.n_sources = n_sources;
        r.seed = seed;
        r.sent = log.sent();
        r.received = log.received();
        r.pdr = pdr(log);
        out.runs[static_cast<std::size_t>(i)] = r;
        if (progress) progress(r);
    });

    out.summary = aggregate(out.runs);
    return out;
}

// ---------------------------------------------------------------------------
// Trend analysis
// ---------------------------------------------------------------------------

/// How the mean delivery ratio behaves as the source count grows, per kind,
/// plus the per-count comparison between road traffic and random waypoint.
struct TrendReport {
    // consecutive source-count steps whose mean does not decrease
    int move_steps = 0, move_up = 0;
    int rwp_steps = 0, rwp_up = 0;
    // source counts present for both kinds, and of those, how many have
    // mean(move) < mean(rwp) and spread(move) >= spread(rwp)
    int paired_counts = 0;
    int move_mean_below = 0;
    int move_spread_wider = 0;
};

inline TrendReport analyze_trends(const std::vector<AggregateRow>& rows) {
    TrendReport tr;
    std::map<int, const AggregateRow*> move_rows, rwp_rows;
    for (const auto& r : rows)
        (r.kind == MobilityKind::move ? move_rows : rwp_rows)[r.n_sources] = &r;
    auto count_steps = [](const std::map<int, const AggregateRow*>& m, int& steps, int& up) {
        const AggregateRow* prev = nullptr;
        for (const auto& [n, row] : m) {
            if (prev) {
                ++steps;
                if (row->mean >= prev->mean) ++up;
            }
            prev = row;
        }
    };
    count_steps(move_rows, tr.move_steps, tr.move_up);
    count_steps(rwp_rows, tr.rwp_steps, tr.rwp_up);
    for (const auto& [n, mrow] : move_rows) {
        auto it = rwp_rows.find(n);
        if (it == rwp_rows.end()) continue;
        ++tr.paired_counts;
        if (mrow->mean < it->second->mean) ++tr.move_mean_below;
        if (mrow->max - mrow->min >= it->second->max - it->second->min) ++tr.move_spread_wider;
    }
    return tr;
}

/// Human-readable trend verdicts for experiment summaries.
inline std::string describe_trends(const TrendReport& tr) {
    std::string out;
    out += "trend move: " + std::to_string(tr.move_up) + "/" +
           std::to_string(tr.move_steps) + " non-decreasing steps\n";
    out += "trend rwp: " + std::to_string(tr.rwp_up) + "/" +
           std::to_string(tr.rwp_steps) + " non-decreasing steps\n";
    out += "move mean below rwp: " + std::to_string(tr.move_mean_below) + "/" +
           std::to_string(tr.paired_counts) + " source counts\n";
    out += "move spread at least rwp: " + std::to_string(tr.move_spread_wider) + "/" +
           std::to_string(tr.paired_counts) + " source counts\n";
    return out;
}

} // namespace vanet
