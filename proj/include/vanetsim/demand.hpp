#pragma once

#include <map>
#include <optional>
#include <vector>

#include "vanetsim/core.hpp"
#include "vanetsim/road_net.hpp"

namespace vanet {

enum class VehicleClass { car, bus };

struct Trip {
    int vehicle_id = 0;
    double depart = 0.0;               // s
    std::vector<int> route;            // connected edge ids, non-empty
    VehicleClass vehicle_class = VehicleClass::car;
    std::optional<double> max_speed;   // per-trip cap, overrides VehicleParams
};

struct Flow {
    int origin = 0;
    int dest = 0;
    int count = 1;
    double begin = 0.0;
    double end = 0.0;
};

struct BusLine {
    std::vector<int> route;
    double first_depart = 0.0;
    double last_depart = 0.0;
    double headway = 1.0; // s, constant by definition
};

/** Turning probabilities per (junction, incoming edge). */
class TurnTable {
public:
    using Branches = std::vector<std::pair<int, double>>; // (out edge, probability)

    void set(int junction, int in_edge, Branches branches) {
        entries_[{junction, in_edge}] = std::move(branches);
    }

    const Branches* find(int junction, int in_edge) const {
        auto it = entries_.find({junction, in_edge});
        return it == entries_.end() ? nullptr : &it->second;
    }

    const std::map<std::pair<int, int>, Branches>& entries() const { return entries_; }

    /// Throws unless every entry is a probability distribution over edges
    /// that actually leave the junction.
    void check(const RoadNetwork& net) const {
        for (const auto& [key, branches] : entries_) {
            auto [junction, in_edge] = key;
            if (!net.has_node(junction)) throw Error("turn entry at unknown junction");
            if (!net.has_edge(in_edge) || net.edge(in_edge).to != junction)
                throw Error("turn entry: edge " + std::to_string(in_edge) +
                            " does not enter junction " + std::to_string(junction));
            double sum = 0.0;
            for (const auto& [out, p] : branches) {
                if (p < 0) throw Error("turn entry: negative probability");
                if (!net.has_edge(out) || net.edge(out).from != junction)
                    throw Error("turn entry: edge " + std::to_string(out) +
                                " does not leave junction " + std::to_string(junction));
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw Error("turn entry at junction " + std::to_string(junction) +
                            ": probabilities sum to " + num_str(sum));
        }
    }

private:
    std::map<std::pair<int, int>, Branches> entries_;
};

inline void check_trip(const RoadNetwork& net, const Trip& t) {
    if (t.route.empty()) throw Error("trip " + std::to_string(t.vehicle_id) + ": empty route");
    for (int eid : t.route)
        if (!net.has_edge(eid))
            throw Error("trip " + std::to_string(t.vehicle_id) + ": unknown edge " +
                        std::to_string(eid));
    if (!route_is_connected(net, t.route))
        throw Error("trip " + std::to_string(t.vehicle_id) + ": route not connected");
    if (!std::isfinite(t.depart) || t.depart < 0)
        throw Error("trip " + std::to_string(t.vehicle_id) + ": bad departure");
}

/// count trips, evenly spaced departures in [begin, end), all on the
/// shortest route.
inline std::vector<Trip> expand_flow(const RoadNetwork& net, const Flow& flow) {
    if (flow.count < 1) throw Error("flow: count must be >= 1");
    if (flow.end < flow.begin) throw Error("flow: end before begin");
    if (flow.origin == flow.dest) throw Error("flow: origin equals destination");
    auto route = shortest_route(net, flow.origin, flow.dest);
    if (!route)
        throw Error("flow: no route from " + std::to_string(flow.origin) + " to " +
                    std::to_string(flow.dest));
    std::vector<Trip> trips;
    trips.reserve(flow.count);
    for (int i = 0; i < flow.count; ++i) {
        Trip t;
        t.vehicle_id = i;
        t.depart = flow.begin + i * (flow.end - flow.begin) / flow.count;
        t.route = route->edges;
        trips.push_back(std::move(t));
    }
    return trips;
}

/// Departures first, first+h, ... <= last; floor((last-first)/h) + 1 trips.
inline std::vector<Trip> expand_busline(const RoadNetwork& net, const BusLine& line) {
    if (line.headway <= 0) throw Error("bus line: headway must be > 0");
    if (line.last_depart < line.first_depart) throw Error("bus line: last before first");
    Trip proto;
    proto.route = line.route;
    proto.vehicle_class = VehicleClass::bus;
    check_trip(net, proto);
    const int count =
        static_cast<int>(std::floor((line.last_depart - line.first_depart) / line.headway +
                                    1e-9)) + 1;
    std::vector<Trip> trips;
    trips.reserve(count);
    for (int i = 0; i < count; ++i) {
        Trip t = proto;
        t.vehicle_id = i;
        t.depart = line.first_depart + i * line.headway;
        trips.push_back(std::move(t));
    }
    return trips;
}

/// n shortest-path trips between uniformly drawn distinct node pairs,
/// departures uniform in [begin, end). Unreachable pairs are redrawn, at
/// most 100 times each.
inline std::vector<Trip> random_trips(const RoadNetwork& net, int n, double begin, double end,
                                      std::uint64_t seed) {
    if (n < 0) throw Error("random trips: n must be >= 0");
    const auto& nodes = net.nodes();
    if (n > 0 && nodes.size() < 2) throw Error("random trips: need at least 2 nodes");
    Rng rng(seed);
    std::vector<Trip> trips;
    trips.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::optional<Route> route;
        int tries = 0;
        while (!route) {
            if (++tries > 100)
                throw Error("random trips: retry budget exhausted (map disconnected?)");
            int a = nodes[rng.uniform_int(nodes.size())].id;
            int b = nodes[rng.uniform_int(nodes.size())].id;
            if (a == b) continue;
            route = shortest_route(net, a, b);
            if (route && route->edges.empty()) route.reset();
        }
        Trip t;
        t.vehicle_id = i;
        t.depart = rng.uniform(begin, end);
        t.route = route->edges;
        trips.push_back(std::move(t));
    }
    return trips;
}

/**
 * Random walk over the graph guided by the turn table: start on start_edge,
 * at each junction sample the next edge from the table entry (uniform over
 * outgoing edges when none exists), stop at a dead end or after max_edges.
 */
inline std::vector<int> turn_route(const RoadNetwork& net, const TurnTable& table,
                                   int start_edge, int max_edges, std::uint64_t seed) {
    if (!net.has_edge(start_edge))
        throw Error("turn route: unknown edge " + std::to_string(start_edge));
    if (max_edges < 1) throw Error("turn route: max_edges must be >= 1");
    table.check(net);
    Rng rng(seed);
    std::vector<int> route{start_edge};
    int current = start_edge;
    while (static_cast<int>(route.size()) < max_edges) {
        const int junction = net.edge(current).to;
        if (net.node(junction).kind == NodeKind::dead_end) break;
        const auto& outs = net.out_edges(junction);
        if (outs.empty()) break;
        int next = -1;
        if (const auto* branches = table.find(junction, current)) {
            double r = rng.uniform01();
            double acc = 0.0;
            for (const auto& [out, p] : *branches) {
                acc += p;
                next = out;
                if (r < acc) break;
            }
        } else {
            next = outs[rng.uniform_int(outs.size())];
        }
        route.push_back(next);
        current = next;
    }
    return route;
}

/// Trips that wander by turn probabilities from uniformly drawn start edges.
inline std::vector<Trip> turn_trips(const RoadNetwork& net, const TurnTable& table, int n,
                                    double begin, double end, int max_edges,
                                    std::uint64_t seed) {
    if (net.edges().empty() && n > 0) throw Error("turn trips: network has no edges");
    Rng rng(seed);
    std::vector<Trip> trips;
    trips.reserve(n);
    for (int i = 0; i < n; ++i) {
        int start = net.edges()[rng.uniform_int(net.edges().size())].id;
        Trip t;
        t.vehicle_id = i;
        t.depart = rng.uniform(begin, end);
        t.route = turn_route(net, table, start, max_edges, rng.next_u64());
        trips.push_back(std::move(t));
    }
    return trips;
}

// ---------------------------------------------------------------------------
// Demand file format (plain text, '#' comments):
//   flow <origin> <dest> <count> <begin> <end>
//   bus <first> <last> <headway> <edge,edge,...>
//   turn <junction> <in-edge> <out-edge>:<p> ...
//   trip <depart> <edge,edge,...> [max-speed]
// ---------------------------------------------------------------------------

struct DemandSpec {
    std::vector<Flow> flows;
    std::vector<BusLine> bus_lines;
    std::vector<Trip> explicit_trips; // vehicle ids reassigned on expansion
    TurnTable turns;
};

inline DemandSpec parse_demand(const std::string& text) {
    DemandSpec spec;
    const auto lines = text_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        const int ln = static_cast<int>(i + 1);
        if (is_comment_or_blank(lines[i])) continue;
        auto tok = split_ws(lines[i]);
        auto edge_list = [&](const std::string& s) {
            std::vector<int> edges;
            for (const auto& e : split_char(s, ','))
                if (!e.empty()) edges.push_back(static_cast<int>(parse_int(e, ln)));
            return edges;
        };
        if (tok[0] == "flow") {
            if (tok.size() != 6) throw ParseError("flow needs 5 fields", ln);
            spec.flows.push_back({static_cast<int>(parse_int(tok[1], ln)),
                                  static_cast<int>(parse_int(tok[2], ln)),
                                  static_cast<int>(parse_int(tok[3], ln)),
                                  parse_double(tok[4], ln), parse_double(tok[5], ln)});
        } else if (tok[0] == "bus") {
            if (tok.size() != 5) throw ParseError("bus needs 4 fields", ln);
            BusLine line;
            line.first_depart = parse_double(tok[1], ln);
            line.last_depart = parse_double(tok[2], ln);
            line.headway = parse_double(tok[3], ln);
            line.route = edge_list(tok[4]);
            spec.bus_lines.push_back(std::move(line));
        } else if (tok[0] == "turn") {
            if (tok.size() < 4) throw ParseError("turn needs junction, in-edge, branches", ln);
            TurnTable::Branches branches;
            for (size_t k = 3; k < tok.size(); ++k) {
                auto parts = split_char(tok[k], ':');
                if (parts.size() != 2) throw ParseError("bad branch '" + tok[k] + "'", ln);
                branches.emplace_back(static_cast<int>(parse_int(parts[0], ln)),
                                      parse_double(parts[1], ln));
            }
            spec.turns.set(static_cast<int>(parse_int(tok[1], ln)),
                           static_cast<int>(parse_int(tok[2], ln)), std::move(branches));
        } else if (tok[0] == "trip") {
            if (tok.size() != 3 && tok.size() != 4)
                throw ParseError("trip needs depart and edge list", ln);
            Trip t;
            t.depart = parse_double(tok[1], ln);
            t.route = edge_list(tok[2]);
            if (tok.size() == 4) t.max_speed = parse_double(tok[3], ln);
            spec.explicit_trips.push_back(std::move(t));
        } else {
            throw ParseError("unknown record '" + tok[0] + "'", ln);
        }
    }
    return spec;
}

inline std::string write_demand(const DemandSpec& spec) {
    std::string out;
    for (const auto& f : spec.flows)
        out += "flow " + num_str(f.origin) + " " + num_str(f.dest) + " " + num_str(f.count) +
               " " + num_str(f.begin) + " " + num_str(f.end) + "\n";
    for (const auto& b : spec.bus_lines) {
        out += "bus " + num_str(b.first_depart) + " " + num_str(b.last_depart) + " " +
               num_str(b.headway) + " ";
        for (size_t i = 0; i < b.route.size(); ++i)
            out += (i ? "," : "") + num_str(b.route[i]);
        out += "\n";
    }
    for (const auto& [key, branches] : spec.turns.entries()) {
        out += "turn " + num_str(key.first) + " " + num_str(key.second);
        for (const auto& [edge, p] : branches) out += " " + num_str(edge) + ":" + num_str(p);
        out += "\n";
    }
    for (const auto& t : spec.explicit_trips) {
        out += "trip " + num_str(t.depart) + " ";
        for (size_t i = 0; i < t.route.size(); ++i) out += (i ? "," : "") + num_str(t.route[i]);
        if (t.max_speed) out += " " + num_str(*t.max_speed);
        out += "\n";
    }
    return out;
}

/// Flattens a demand spec to routed trips with dense vehicle ids, in
/// expansion order: flows, bus lines, explicit trips.
inline std::vector<Trip> expand_demand(const RoadNetwork& net, const DemandSpec& spec) {
    spec.turns.check(net);
    std::vector<Trip> all;
    for (const auto& f : spec.flows)
        for (auto& t : expand_flow(net, f)) all.push_back(std::move(t));
    for (const auto& b : spec.bus_lines)
        for (auto& t : expand_busline(net, b)) all.push_back(std::move(t));
    for (const auto& t : spec.explicit_trips) all.push_back(t);
    for (size_t i = 0; i < all.size(); ++i) {
        all[i].vehicle_id = static_cast<int>(i);
        check_trip(net, all[i]);
    }
    return all;
}

} // namespace vanet
