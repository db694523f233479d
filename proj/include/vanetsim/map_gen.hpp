#pragma once

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

#include "vanetsim/core.hpp"
#include "vanetsim/road_net.hpp"

namespace vanet {

/// Attributes stamped on every generated edge.
struct EdgeDefaults {
    double speed_limit = 13.9; // m/s, urban 50 km/h
    int lanes = 1;
    int priority = 0;
};

struct GridSpec {
    int k = 1;               // junctions per side
    double block_len = 100.0;
    EdgeDefaults defaults;
};

struct SpiderSpec {
    int arms = 3;
    int circles = 1;
    double radius_step = 100.0;
    EdgeDefaults defaults;
};

struct RandomMapSpec {
    int n_nodes = 2;
    double width = 1000.0;
    double height = 1000.0;
    int target_degree = 2;
    std::uint64_t seed = 0;
    EdgeDefaults defaults;
};

struct Placemark {
    std::string name;
    double lon = 0.0; // degrees
    double lat = 0.0; // degrees
};

struct KmlDocument {
    std::vector<Placemark> placemarks;
};

namespace detail {

/// Builds a network from positions and undirected segments (two directed
/// edges per segment, pair order preserved). Node kind falls out of the
/// connectivity: at most one distinct neighbor makes a dead end.
struct Segment {
    int a = 0, b = 0;
    double length = 0.0;
};

inline RoadNetwork assemble(const std::vector<Vec2>& positions,
                            const std::vector<Segment>& segments,
                            const EdgeDefaults& def) {
    std::vector<std::set<int>> neighbors(positions.size());
    for (const auto& s : segments) {
        neighbors[s.a].insert(s.b);
        neighbors[s.b].insert(s.a);
    }
    RoadNetwork net;
    for (size_t i = 0; i < positions.size(); ++i) {
        NodeKind kind = neighbors[i].size() <= 1 ? NodeKind::dead_end : NodeKind::junction;
        net.add_node({static_cast<int>(i), positions[i], kind});
    }
    int eid = 0;
    for (const auto& s : segments) {
        // never let float noise in positions undercut the declared length
        double len = std::max(s.length, distance(positions[s.a], positions[s.b]));
        len = std::max(len, 1e-6);
        net.add_edge({eid++, s.a, s.b, len, def.speed_limit, def.lanes, def.priority});
        net.add_edge({eid++, s.b, s.a, len, def.speed_limit, def.lanes, def.priority});
    }
    return net;
}

} // namespace detail

/// k x k lattice, spacing block_len, every adjacent pair double-connected.
inline RoadNetwork generate_grid(const GridSpec& spec) {
    if (spec.k < 1 || spec.block_len <= 0) throw Error("grid spec: k >= 1, block_len > 0");
    std::vector<Vec2> pos;
    pos.reserve(static_cast<size_t>(spec.k) * spec.k);
    for (int r = 0; r < spec.k; ++r)
        for (int c = 0; c < spec.k; ++c)
            pos.push_back({c * spec.block_len, r * spec.block_len});
    std::vector<detail::Segment> segs;
    for (int r = 0; r < spec.k; ++r) {
        for (int c = 0; c < spec.k; ++c) {
            int n = r * spec.k + c;
            if (c + 1 < spec.k) segs.push_back({n, n + 1, spec.block_len});
            if (r + 1 < spec.k) segs.push_back({n, n + spec.k, spec.block_len});
        }
    }
    return detail::assemble(pos, segs, spec.defaults);
}

/// Center plus arms x circles ring nodes; radial spokes and ring arcs.
/// Arcs are straight chords carrying the true arc length.
inline RoadNetwork generate_spider(const SpiderSpec& spec) {
    if (spec.arms < 3 || spec.circles < 1 || spec.radius_step <= 0)
        throw Error("spider spec: arms >= 3, circles >= 1, radius_step > 0");
    const double R = spec.circles * spec.radius_step; // shift into first quadrant
    std::vector<Vec2> pos;
    pos.push_back({R, R});
    for (int c = 1; c <= spec.circles; ++c) {
        for (int a = 0; a < spec.arms; ++a) {
            double ang = 2.0 * M_PI * a / spec.arms;
            double r = c * spec.radius_step;
            pos.push_back({R + r * std::cos(ang), R + r * std::sin(ang)});
        }
    }
    auto ring_node = [&](int c, int a) { return 1 + (c - 1) * spec.arms + a; };
    std::vector<detail::Segment> segs;
    for (int c = 1; c <= spec.circles; ++c)
        for (int a = 0; a < spec.arms; ++a)
            segs.push_back({c == 1 ? 0 : ring_node(c - 1, a), ring_node(c, a),
                            spec.radius_step});
    for (int c = 1; c <= spec.circles; ++c) {
        const double arc = c * spec.radius_step * 2.0 * M_PI / spec.arms;
        for (int a = 0; a < spec.arms; ++a)
            segs.push_back({ring_node(c, a), ring_node(c, (a + 1) % spec.arms), arc});
    }
    return detail::assemble(pos, segs, spec.defaults);
}

/// Uniform random positions; nearest-neighbor links up to target_degree,
/// then shortest possible links between components until the whole map is
/// connected (hence strongly connected, all segments being two-way).
inline RoadNetwork generate_random(const RandomMapSpec& spec) {
    if (spec.n_nodes < 2 || spec.width <= 0 || spec.height <= 0 || spec.target_degree < 2)
        throw Error("random map spec: n_nodes >= 2, positive area, target_degree >= 2");
    Rng rng(spec.seed);
    const int n = spec.n_nodes;
    std::vector<Vec2> pos(n);
    for (auto& p : pos) {
        p.x = rng.uniform(0.0, spec.width);
        p.y = rng.uniform(0.0, spec.height);
    }

    std::vector<std::set<int>> nb(n);
    std::vector<detail::Segment> segs;
    auto link = [&](int a, int b) {
        segs.push_back({a, b, std::max(distance(pos[a], pos[b]), 1e-6)});
        nb[a].insert(b);
        nb[b].insert(a);
    };

    const int want = std::min(spec.target_degree, n - 1);
    for (int i = 0; i < n; ++i) {
        while (static_cast<int>(nb[i].size()) < want) {
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) {
                if (j == i || nb[i].count(j)) continue;
                double d = distance(pos[i], pos[j]);
                if (d < best_d) { best_d = d; best = j; }
            }
            if (best < 0) break;
            link(i, best);
        }
    }

    // union-find components, repaired with the shortest cross link
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& s : segs) parent[find(s.a)] = find(s.b);
    for (;;) {
        int ra = -1, rb = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (find(i) == find(j)) continue;
                double d = distance(pos[i], pos[j]);
                if (d < best_d) { best_d = d; ra = i; rb = j; }
            }
        if (ra < 0) break;
        link(ra, rb);
        parent[find(ra)] = find(rb);
    }
    return detail::assemble(pos, segs, spec.defaults);
}

// ---------------------------------------------------------------------------
// KML place-mark import. Only Placemark/Point/coordinates is consumed; the
// road connectivity comes from a companion text file of `link <i> <j>` lines
// (placemark indices, one two-way road each).
// ---------------------------------------------------------------------------

namespace detail {

inline void collect_placemarks(const boost::property_tree::ptree& tree, KmlDocument& doc) {
    for (const auto& [key, child] : tree) {
        if (key == "Placemark") {
            Placemark pm;
            pm.name = child.get<std::string>("name", "");
            auto coords = child.get_optional<std::string>("Point.coordinates");
            if (!coords) throw Error("Placemark without Point coordinates");
            std::string c = *coords;
            auto fields = split_ws(c); // tolerate padded/multiline content
            if (fields.empty()) throw Error("empty coordinates element");
            auto parts = split_char(fields[0], ',');
            if (parts.size() < 2) throw Error("bad coordinates '" + fields[0] + "'");
            pm.lon = parse_double(parts[0], 0);
            pm.lat = parse_double(parts[1], 0); // altitude, if present, ignored
            if (std::abs(pm.lon) > 180.0) throw Error("longitude out of range: " + parts[0]);
            if (std::abs(pm.lat) > 90.0) throw Error("latitude out of range: " + parts[1]);
            doc.placemarks.push_back(pm);
        } else {
            collect_placemarks(child, doc);
        }
    }
}

} // namespace detail

inline KmlDocument parse_kml(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_xml(in, tree);
    } catch (const boost::property_tree::xml_parser_error& e) {
        throw ParseError(std::string("malformed XML: ") + e.message(),
                         static_cast<int>(e.line()));
    }
    KmlDocument doc;
    detail::collect_placemarks(tree, doc);
    return doc;
}

/// `link <i> <j>` lines -> undirected placemark index pairs.
inline std::vector<std::pair<int, int>> parse_link_list(const std::string& text) {
    std::vector<std::pair<int, int>> links;
    const auto lines = text_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        const int ln = static_cast<int>(i + 1);
        if (is_comment_or_blank(lines[i])) continue;
        auto tok = split_ws(lines[i]);
        if (tok.size() != 3 || tok[0] != "link")
            throw ParseError("expected 'link <i> <j>'", ln);
        links.emplace_back(static_cast<int>(parse_int(tok[1], ln)),
                           static_cast<int>(parse_int(tok[2], ln)));
    }
    return links;
}

/**
 * Equirectangular projection about the placemark centroid:
 *   x = R (lon - lon0) cos(lat0) pi/180,  y = R (lat - lat0) pi/180,
 * R = 6371000 m. Edge lengths are the projected Euclidean distances.
 */
inline RoadNetwork project_kml(const KmlDocument& doc,
                               const std::vector<std::pair<int, int>>& links,
                               const EdgeDefaults& def = {}) {
    if (doc.placemarks.empty()) throw Error("no placemarks to project");
    constexpr double earth_radius = 6371000.0;
    constexpr double deg = M_PI / 180.0;
    double lat0 = 0.0, lon0 = 0.0;
    for (const auto& pm : doc.placemarks) {
        lat0 += pm.lat;
        lon0 += pm.lon;
    }
    lat0 /= doc.placemarks.size();
    lon0 /= doc.placemarks.size();

    std::vector<Vec2> pos;
    pos.reserve(doc.placemarks.size());
    for (const auto& pm : doc.placemarks)
        pos.push_back({earth_radius * (pm.lon - lon0) * std::cos(lat0 * deg) * deg,
                       earth_radius * (pm.lat - lat0) * deg});

    std::vector<detail::Segment> segs;
    std::set<std::pair<int, int>> seen;
    const int n = static_cast<int>(pos.size());
    for (auto [a, b] : links) {
        if (a < 0 || a >= n || b < 0 || b >= n)
            throw Error("link references missing placemark " +
                        std::to_string(a < 0 || a >= n ? a : b));
        if (a == b) throw Error("link from placemark " + std::to_string(a) + " to itself");
        auto key = std::minmax(a, b);
        if (!seen.insert(key).second) continue;
        segs.push_back({a, b, distance(pos[a], pos[b])});
    }
    return detail::assemble(pos, segs, def);
}

/**
 * Returns a copy of the network where every junction with three or more
 * incoming edges runs a uniform two-phase signal (default 30 s per phase),
 * approaches grouped by axis so that opposing directions share a phase.
 */
inline RoadNetwork promote_traffic_lights(const RoadNetwork& net, double phase_s = 30.0) {
    RoadNetwork out;
    std::set<int> promoted;
    for (const auto& n : net.nodes()) {
        bool promote = n.kind == NodeKind::junction &&
                       static_cast<int>(net.in_edges(n.id).size()) >= 3;
        if (promote) promoted.insert(n.id);
        out.add_node({n.id, n.pos, promote ? NodeKind::traffic_light : n.kind});
    }
    for (const auto& e : net.edges()) out.add_edge(e);
    for (const auto& [nid, prog] : net.programs()) out.add_program(prog);
    for (int nid : promoted) {
        const Vec2 at = out.node(nid).pos;
        TrafficLightProgram prog;
        prog.node = nid;
        TlsPhase a, b;
        double ref = std::numeric_limits<double>::quiet_NaN();
        for (int eid : out.in_edges(nid)) {
            const Vec2 from = out.node(out.edge(eid).from).pos;
            double ang = std::atan2(at.y - from.y, at.x - from.x);
            double folded = std::fmod(ang + 2.0 * M_PI, M_PI); // opposite approaches align
            if (std::isnan(ref)) ref = folded;
            double diff = std::abs(folded - ref);
            diff = std::min(diff, M_PI - diff);
            (diff <= M_PI / 4 ? a : b).green_edges.insert(eid);
        }
        a.duration = b.duration = phase_s;
        prog.phases.push_back(a);
        if (!b.green_edges.empty()) prog.phases.push_back(b);
        out.add_program(prog);
    }
    return out;
}

} // namespace vanet
