#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "vanetsim/core.hpp"
#include "vanetsim/demand.hpp"
#include "vanetsim/road_net.hpp"

namespace vanet {

/** Driver/vehicle characteristics for the car-following model. */
struct VehicleParams {
    double accel = 2.6;        // m/s^2
    double decel = 4.5;        // m/s^2, comfortable braking
    double v_max = 13.9;       // m/s
    double length = 5.0;       // m
    double tau = 1.0;          // s, driver reaction time
    double sigma_driver = 0.5; // [0,1], imperfection (random slowdown)

    void check() const {
        if (!(accel > 0) || !(decel > 0) || !(v_max > 0) || !(length > 0))
            throw Error("vehicle params: accel, decel, v_max, length must be > 0");
        if (!(tau >= 0)) throw Error("vehicle params: tau must be >= 0");
        if (!(sigma_driver >= 0.0 && sigma_driver <= 1.0))
            throw Error("vehicle params: sigma_driver must be in [0,1]");
    }
};

/** Live vehicle state, exposed to step observers. */
struct VehicleState {
    int vehicle_id = 0;
    int edge = 0;         // edge id
    int lane = 0;
    double pos = 0.0;     // m from edge start, front bumper
    double speed = 0.0;   // m/s
    int route_cursor = 0; // index into the trip's edge list
};

/** One sampled point of a node's motion: position at `t`, then constant
 *  speed toward the next waypoint. */
struct Waypoint {
    double t = 0.0;
    Vec2 pos;
    double speed = 0.0;
};

struct NodeTrack {
    int vehicle_id = 0; // external identity; the node index is trace-local
    std::vector<Waypoint> wp;
};

/**
 * Piecewise-linear motion of every node over [0, duration] inside
 * [0,width] x [0,height]. A node rests at its first waypoint before that
 * waypoint's time and at its last waypoint afterwards.
 */
struct MobilityTrace {
    std::vector<NodeTrack> nodes; // node id = index
    double duration = 0.0;
    double width = 0.0;
    double height = 0.0;
};

/** Random-waypoint scenario description. */
struct RwpSpec {
    int n_nodes = 0;
    double width = 0.0;
    double height = 0.0;
    double v_min = 1.0;
    double v_max = 13.9;
    double pause = 0.0;
    double duration = 0.0;
    std::uint64_t seed = 0;

    void check() const {
        if (n_nodes < 0) throw Error("rwp: n_nodes must be >= 0");
        if (!(width >= 0) || !(height >= 0)) throw Error("rwp: area must be non-negative");
        if (!(v_min > 0) || !(v_max >= v_min)) throw Error("rwp: need 0 < v_min <= v_max");
        if (!(pause >= 0)) throw Error("rwp: pause must be >= 0");
        if (!(duration >= 0)) throw Error("rwp: duration must be >= 0");
    }
};

namespace detail {

// Two-decimal trace files cannot represent waypoints closer than this.
constexpr double min_wp_gap = 0.01;

// How close to a junction an approach must be occupied to demand yielding.
constexpr double yield_zone = 30.0;

/// Desired speed before the random imperfection: the deterministic part of
/// the car-following law.
inline double krauss_desired(double v, double v_leader, double gap, const VehicleParams& p,
                             double dt) {
    const double v_safe =
        v_leader + (gap - v_leader * p.tau) / ((v + v_leader) / (2.0 * p.decel) + p.tau);
    return std::min({p.v_max, v + p.accel * dt, v_safe});
}

} // namespace detail

/**
 * One car-following update: safe speed against a leader `gap` meters ahead
 * moving at `v_leader`, accelerated toward v_max, then randomly slowed by
 * the driver-imperfection term. Pass gap = infinity for an open road.
 */
inline double krauss_step(double v, double v_leader, double gap, const VehicleParams& p,
                          double dt, Rng& rng) {
    const double v_des = detail::krauss_desired(v, v_leader, gap, p, dt);
    return std::max(0.0, v_des - rng.uniform01() * p.sigma_driver * p.accel * dt);
}

// ---------------------------------------------------------------------------
// Interpolation over a trace.
// ---------------------------------------------------------------------------

inline Vec2 position_at(const MobilityTrace& trace, int node, double t) {
    if (node < 0 || node >= static_cast<int>(trace.nodes.size()))
        throw Error("position_at: unknown node " + std::to_string(node));
    const auto& wp = trace.nodes[node].wp;
    if (wp.empty()) return {0.0, 0.0};
    if (t <= wp.front().t) return wp.front().pos;
    if (t >= wp.back().t) return wp.back().pos;
    auto it = std::upper_bound(wp.begin(), wp.end(), t,
                               [](double v, const Waypoint& w) { return v < w.t; });
    const Waypoint& hi = *it;
    const Waypoint& lo = *(it - 1);
    const double f = (t - lo.t) / (hi.t - lo.t);
    return lo.pos + (hi.pos - lo.pos) * f;
}

/// Structural problems of a trace, empty when well-formed.
/// Checks a trace against the model invariants: strictly increasing waypoint
/// times, in-bounds positions, non-negative speeds, and displacement never
/// exceeding the declared leg speed.  `quantum` is the coarsest rounding step
/// applied to the numbers in the trace; pass the file format's resolution
/// (0.01 for the 2-decimal movement files) when checking a parsed trace so
/// that rounding noise is not reported as a violation.
inline std::vector<std::string> trace_violations(const MobilityTrace& trace,
                                                 double quantum = 0.0) {
    std::vector<std::string> out;
    for (size_t n = 0; n < trace.nodes.size(); ++n) {
        const auto& wp = trace.nodes[n].wp;
        const std::string who = "node " + std::to_string(n);
        if (wp.empty()) {
            out.push_back(who + ": no waypoints");
            continue;
        }
        for (size_t i = 0; i < wp.size(); ++i) {
            if (i > 0 && !(wp[i].t > wp[i - 1].t))
                out.push_back(who + ": waypoint times not strictly increasing at #" +
                              std::to_string(i));
            if (wp[i].pos.x < -1e-6 || wp[i].pos.x > trace.width + 1e-6 ||
                wp[i].pos.y < -1e-6 || wp[i].pos.y > trace.height + 1e-6)
                out.push_back(who + ": waypoint #" + std::to_string(i) + " out of bounds");
            if (wp[i].speed < 0) out.push_back(who + ": negative speed");
            if (i > 0) {
                const double dt = wp[i].t - wp[i - 1].t;
                const double d = distance(wp[i].pos, wp[i - 1].pos);
                // Rounding moves each coordinate by up to quantum/2, each
                // timestamp by up to quantum/2, and the declared speed by up
                // to quantum/2; widen the bound by the worst-case combination.
                const double allowed =
                    (wp[i - 1].speed + 0.5 * quantum + 1e-6) * (dt + quantum) +
                    1.5 * quantum;
                if (dt > 0 && d > allowed)
                    out.push_back(who + ": moves faster than declared speed before #" +
                                  std::to_string(i));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Random waypoint model.
// ---------------------------------------------------------------------------

inline MobilityTrace random_waypoint(const RwpSpec& spec) {
    spec.check();
    MobilityTrace trace;
    trace.duration = spec.duration;
    trace.width = spec.width;
    trace.height = spec.height;
    trace.nodes.resize(spec.n_nodes);
    const bool can_move = std::hypot(spec.width, spec.height) >= 0.5 && spec.duration > 0;
    for (int n = 0; n < spec.n_nodes; ++n) {
        Rng rng(derive_seed(spec.seed, "rwp", static_cast<std::uint64_t>(n)));
        trace.nodes[n].vehicle_id = n;
        auto& wp = trace.nodes[n].wp;
        Vec2 pos{rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height)};
        double t = 0.0;
        while (can_move && t < spec.duration) {
            Vec2 dest;
            double dist = 0.0;
            double v = 0.0;
            do { // legs must outlast the trace time resolution
                dest = {rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height)};
                dist = distance(pos, dest);
                v = rng.uniform(spec.v_min, spec.v_max);
            } while (dist < 0.5 || dist / v < detail::min_wp_gap);
            const double arrive = t + dist / v;
            if (arrive >= spec.duration) { // leg cut off by the horizon
                wp.push_back({t, pos, v});
                if (spec.duration - t >= detail::min_wp_gap) {
                    const double f = (spec.duration - t) / (arrive - t);
                    wp.push_back({spec.duration, pos + (dest - pos) * f, 0.0});
                }
                break;
            }
            wp.push_back({t, pos, v});
            t = arrive;
            pos = dest;
            if (spec.pause >= detail::min_wp_gap) wp.push_back({t, pos, 0.0});
            t += spec.pause;
        }
        if (wp.empty()) wp.push_back({0.0, pos, 0.0});
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Road-constrained microscopic simulation.
// ---------------------------------------------------------------------------

namespace detail {

struct SimVehicle {
    int vid = 0;
    const Trip* trip = nullptr;
    int cursor = 0; // index into trip->route
    int edge = 0;   // current edge id
    int lane = 0;
    double pos = 0.0;
    double speed = 0.0;
};

/// One step of motion from `a` (at time t0, over `span` seconds) to `b`,
/// bending at `mid` junction points, appended as waypoints. Points closer
/// than the trace time resolution are merged into a straight chord; straight
/// stretches longer than a second are subdivided. The endpoint itself is not
/// emitted — it becomes the next step's start.
inline void record_path(std::vector<Waypoint>& wp, double t0, double span, Vec2 a,
                        const std::vector<std::pair<double, Vec2>>& mid, Vec2 b) {
    // extending a rest period needs no new waypoint
    if (mid.empty() && distance(a, b) == 0.0 && !wp.empty() && wp.back().speed == 0.0 &&
        wp.back().pos == a)
        return;
    std::vector<std::pair<double, Vec2>> pts{{t0, a}};
    for (const auto& m : mid)
        if (m.first - pts.back().first >= min_wp_gap && t0 + span - m.first >= min_wp_gap)
            pts.push_back(m);
    pts.push_back({t0 + span, b});
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const double seg_t = pts[i + 1].first - pts[i].first;
        const double v = distance(pts[i].second, pts[i + 1].second) / seg_t;
        const int k = std::max(1, static_cast<int>(std::ceil(seg_t - 1e-9)));
        for (int q = 0; q < k; ++q) {
            const double f = static_cast<double>(q) / k;
            wp.push_back({pts[i].first + seg_t * f,
                          pts[i].second + (pts[i + 1].second - pts[i].second) * f, v});
        }
    }
}

} // namespace detail

/**
 * Car-following simulation of trips over the network. Vehicles enter at
 * position 0 of their first edge (held back while the entry is occupied),
 * follow the vehicle ahead in their lane, stop for red signals and for
 * higher-ranked occupied approaches, cross junctions along their route, and
 * leave the network at route end. The returned trace is shifted so all
 * coordinates are non-negative; every node keeps its last position once its
 * vehicle is done.
 *
 * An optional observer is called after every step with the live states
 * (sorted by vehicle id).
 */
inline MobilityTrace simulate_traffic(
    const RoadNetwork& net, const std::vector<Trip>& trips, const VehicleParams& params,
    double dt, double duration, std::uint64_t seed,
    const std::function<void(double, const std::vector<VehicleState>&)>& observer = {}) {
    params.check();
    if (!(dt >= detail::min_wp_gap))
        throw Error("simulate_traffic: dt must be at least " + num_str(detail::min_wp_gap));
    if (!(duration >= 0)) throw Error("simulate_traffic: duration must be >= 0");
    for (const auto& t : trips) check_trip(net, t);

    // translation to a non-negative frame
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
    if (!net.nodes().empty()) {
        min_x = max_x = net.nodes()[0].pos.x;
        min_y = max_y = net.nodes()[0].pos.y;
        for (const auto& nd : net.nodes()) {
            min_x = std::min(min_x, nd.pos.x);
            min_y = std::min(min_y, nd.pos.y);
            max_x = std::max(max_x, nd.pos.x);
            max_y = std::max(max_y, nd.pos.y);
        }
    }
    const Vec2 shift{-min_x, -min_y};
    auto edge_xy = [&](int edge_id, double pos) {
        const RoadEdge& e = net.edge(edge_id);
        const Vec2 a = net.node(e.from).pos;
        const Vec2 b = net.node(e.to).pos;
        return a + (b - a) * (pos / e.length) + shift;
    };

    MobilityTrace trace;
    trace.duration = duration;
    trace.width = max_x - min_x;
    trace.height = max_y - min_y;
    trace.nodes.resize(trips.size());
    std::map<int, std::vector<Waypoint>*> track; // vehicle id -> waypoint list
    for (size_t i = 0; i < trips.size(); ++i) {
        if (track.count(trips[i].vehicle_id))
            throw Error("simulate_traffic: duplicate vehicle id " +
                        std::to_string(trips[i].vehicle_id));
        trace.nodes[i].vehicle_id = trips[i].vehicle_id;
        track[trips[i].vehicle_id] = &trace.nodes[i].wp;
    }

    // insertion queues per first edge, ordered by (depart, vehicle id)
    std::vector<const Trip*> order;
    for (const auto& t : trips) order.push_back(&t);
    std::stable_sort(order.begin(), order.end(), [](const Trip* a, const Trip* b) {
        if (a->depart != b->depart) return a->depart < b->depart;
        return a->vehicle_id < b->vehicle_id;
    });
    std::map<int, std::deque<const Trip*>> entry_queue;
    for (const Trip* t : order) entry_queue[t->route.front()].push_back(t);

    std::map<int, detail::SimVehicle> active; // vid -> state
    // per (edge, lane): active vids ascending by position
    std::map<std::pair<int, int>, std::vector<int>> lanes;

    auto lane_rear_space = [&](int edge_id, int lane) {
        const auto it = lanes.find({edge_id, lane});
        if (it == lanes.end() || it->second.empty())
            return std::numeric_limits<double>::infinity();
        const auto& v = active.at(it->second.front());
        return v.pos - params.length;
    };
    auto is_signal_open = [&](int edge_id, double at) {
        const RoadEdge& e = net.edge(edge_id);
        const TrafficLightProgram* prog = net.program_for(e.to);
        return !prog || prog->is_green(edge_id, at);
    };
    auto transition_lane = [&](int lane, int next_edge) {
        return std::min(lane, net.edge(next_edge).lanes - 1);
    };

    // (priority, then lower edge id) ranks competing unsignalized approaches
    auto must_yield = [&](const detail::SimVehicle& v) {
        const RoadEdge& e = net.edge(v.edge);
        if (net.program_for(e.to)) return false; // signals arbitrate instead
        if (e.length - v.pos > detail::yield_zone) return false;
        for (int other : net.in_edges(e.to)) {
            if (other == v.edge) continue;
            const RoadEdge& oe = net.edge(other);
            const bool outranks =
                oe.priority > e.priority || (oe.priority == e.priority && other < v.edge);
            if (!outranks) continue;
            for (int l = 0; l < oe.lanes; ++l) {
                const auto it = lanes.find({other, l});
                if (it == lanes.end() || it->second.empty()) continue;
                const auto& front = active.at(it->second.back());
                if (oe.length - front.pos <= detail::yield_zone) return true;
            }
        }
        return false;
    };

    struct Plan {
        double v_new = 0.0;
        bool blocked = false; // signal or priority holds it at the stop line
    };

    Rng rng(derive_seed(seed, "mobility"));
    const double inf = std::numeric_limits<double>::infinity();

    double now = 0.0;
    while (now < duration) {
        double step = dt;
        if (now + dt > duration) {
            step = duration - now;
            if (step < detail::min_wp_gap) break;
        }

        // --- entries: head of each edge queue takes the first free lane ---
        for (auto& [edge_id, queue] : entry_queue) {
            const int n_lanes = net.edge(edge_id).lanes;
            while (!queue.empty() && queue.front()->depart <= now + 1e-9) {
                int free_lane = -1;
                for (int l = 0; l < n_lanes && free_lane < 0; ++l)
                    if (lane_rear_space(edge_id, l) >= 0.0) free_lane = l;
                if (free_lane < 0) break;
                const Trip* t = queue.front();
                queue.pop_front();
                detail::SimVehicle v;
                v.vid = t->vehicle_id;
                v.trip = t;
                v.edge = edge_id;
                v.lane = free_lane;
                active.emplace(v.vid, v);
                auto& lane = lanes[{edge_id, free_lane}];
                lane.insert(lane.begin(), v.vid);
                // every node exists from t = 0; late entries rest at the origin
                auto& wp = *track.at(v.vid);
                if (now > 0.0 && wp.empty()) wp.push_back({0.0, edge_xy(edge_id, 0.0), 0.0});
            }
        }

        // --- plan: desired speeds from the pre-step snapshot ---
        std::map<int, Plan> plans;
        for (const auto& [vid, v] : active) {
            const RoadEdge& e = net.edge(v.edge);
            VehicleParams p = params;
            p.v_max = std::min(params.v_max, e.speed_limit);
            if (v.trip->max_speed) p.v_max = std::min(p.v_max, *v.trip->max_speed);

            Plan plan;
            double v_des = detail::krauss_desired(v.speed, 0.0, inf, p, step);

            // vehicle ahead in the same lane
            const auto& lane = lanes.at({v.edge, v.lane});
            auto it = std::find(lane.begin(), lane.end(), vid);
            if (it != lane.end() && it + 1 != lane.end()) {
                const auto& lead = active.at(*(it + 1));
                const double gap = std::max(0.0, lead.pos - params.length - v.pos);
                v_des = std::min(v_des, detail::krauss_desired(v.speed, lead.speed, gap, p, step));
            }

            // stop line: red signal or a higher-ranked occupied approach
            if (!is_signal_open(v.edge, now) || must_yield(v)) {
                plan.blocked = true;
                const double gap = std::max(0.0, e.length - v.pos);
                v_des = std::min(v_des, detail::krauss_desired(v.speed, 0.0, gap, p, step));
            }

            // rearmost vehicle on the next route edge
            if (v.cursor + 1 < static_cast<int>(v.trip->route.size())) {
                const int next = v.trip->route[v.cursor + 1];
                const int nlane = transition_lane(v.lane, next);
                const double rear = lane_rear_space(next, nlane);
                if (rear < inf) {
                    const auto& rv = active.at(lanes.at({next, nlane}).front());
                    const double gap = std::max(0.0, e.length - v.pos + rear);
                    v_des = std::min(v_des, detail::krauss_desired(v.speed, rv.speed, gap, p, step));
                }
            }

            plan.v_new =
                std::max(0.0, v_des - rng.uniform01() * p.sigma_driver * p.accel * step);
            plans.emplace(vid, plan);
        }

        // --- commit in vehicle-id order with live no-overlap clamps ---
        std::vector<int> exited;
        for (auto& [vid, v] : active) {
            const Plan& plan = plans.at(vid);
            const Vec2 from_xy = edge_xy(v.edge, v.pos);
            double x = v.pos + plan.v_new * step;
            double crossed = 0.0; // distance covered on edges already left
            std::vector<std::pair<double, Vec2>> corners; // (path offset, junction)
            bool gone = false;

            // never pass the live rear of the vehicle ahead in this lane
            {
                const auto& lane = lanes.at({v.edge, v.lane});
                auto it = std::find(lane.begin(), lane.end(), vid);
                if (it != lane.end() && it + 1 != lane.end())
                    x = std::min(x, active.at(*(it + 1)).pos - params.length);
                x = std::max(x, v.pos); // vehicles never roll backwards
            }

            while (x >= net.edge(v.edge).length) {
                const RoadEdge& e = net.edge(v.edge);
                if (plan.blocked || !is_signal_open(v.edge, now) || must_yield(v)) {
                    x = e.length; // hold at the stop line
                    break;
                }
                auto& lane = lanes.at({v.edge, v.lane});
                if (lane.empty() || lane.back() != vid) { // only the front may cross
                    x = e.length;
                    break;
                }
                lane.pop_back();
                if (v.cursor + 1 >= static_cast<int>(v.trip->route.size())) {
                    gone = true;
                    crossed += e.length - v.pos;
                    break;
                }
                const int next = v.trip->route[v.cursor + 1];
                const int nlane = transition_lane(v.lane, next);
                double enter = std::min(x - e.length, lane_rear_space(next, nlane));
                if (enter < 0.0) { // entry blocked mid-step: stay at the line
                    lane.push_back(vid);
                    x = e.length;
                    break;
                }
                crossed += e.length - v.pos;
                v.cursor += 1;
                v.edge = next;
                v.lane = nlane;
                v.pos = 0.0;
                x = enter;
                corners.emplace_back(crossed, edge_xy(next, 0.0));
                auto& nl = lanes[{next, nlane}];
                nl.insert(nl.begin(), vid);
            }

            double dist;
            Vec2 to_xy;
            if (gone) {
                dist = crossed;
                to_xy = edge_xy(v.edge, net.edge(v.edge).length);
                exited.push_back(vid);
            } else {
                dist = crossed + x - v.pos;
                v.pos = x;
                v.speed = dist / step;
                to_xy = edge_xy(v.edge, v.pos);
            }

            // junction passage times assume uniform speed along the path
            std::vector<std::pair<double, Vec2>> mid;
            if (dist > 0)
                for (const auto& [offset, xy] : corners)
                    mid.emplace_back(now + step * offset / dist, xy);

            auto& wp = *track.at(vid);
            detail::record_path(wp, now, step, from_xy, mid, to_xy);
            if (gone) wp.push_back({now + step, to_xy, 0.0});
        }
        for (int vid : exited) active.erase(vid);

        now += step;

        if (observer) {
            std::vector<VehicleState> states;
            states.reserve(active.size());
            for (const auto& [vid, v] : active)
                states.push_back({vid, v.edge, v.lane, v.pos, v.speed, v.cursor});
            observer(now, states);
        }
    }

    // vehicles still on the road halt in place; never-inserted ones rest at
    // their origin so every node has a position for the whole run
    for (const auto& [vid, v] : active) {
        auto& wp = *track.at(vid);
        const Vec2 xy = edge_xy(v.edge, v.pos);
        if (wp.empty())
            wp.push_back({0.0, xy, 0.0});
        else if (duration >= wp.back().t + detail::min_wp_gap)
            wp.push_back({duration, xy, 0.0});
    }
    for (size_t i = 0; i < trips.size(); ++i) {
        auto& wp = trace.nodes[i].wp;
        if (wp.empty()) wp.push_back({0.0, edge_xy(trips[i].route.front(), 0.0), 0.0});
    }
    return trace;
}

} // namespace vanet
