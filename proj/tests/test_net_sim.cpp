#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "vanetsim/mobility.hpp"
#include "vanetsim/net_sim.hpp"

using namespace vanet;

namespace {

// Nodes pinned at fixed positions for the whole run.
MobilityTrace static_trace(const std::vector<Vec2>& where, double duration) {
    MobilityTrace t;
    t.duration = duration;
    for (const auto& p : where) {
        t.width = std::max(t.width, p.x);
        t.height = std::max(t.height, p.y);
    }
    t.nodes.resize(where.size());
    for (size_t i = 0; i < where.size(); ++i) {
        t.nodes[i].vehicle_id = static_cast<int>(i);
        t.nodes[i].wp = {{0.0, where[i], 0.0}};
    }
    return t;
}

CbrFlow flow(int src, int dst, double start, double stop) {
    CbrFlow f;
    f.src = src;
    f.dst = dst;
    f.start = start;
    f.stop = stop;
    return f;
}

RadioParams quiet_radio() {
    RadioParams r;
    r.shadow_sigma = 0.0;
    return r;
}

std::map<DropReason, int> drop_histogram(const PacketLog& log) {
    std::map<DropReason, int> h;
    for (const auto& p : log.packets)
        if (!p.delivered) ++h[p.drop_reason];
    return h;
}

} // namespace

TEST_CASE("path loss follows the log-distance law") {
    RadioParams r = quiet_radio();
    Rng rng(1);
    CHECK(path_loss_db(1.0, r, rng) == Catch::Approx(40.0).margin(1e-12));
    CHECK(path_loss_db(10.0, r, rng) == Catch::Approx(40.0 + 25.6).margin(1e-9));
    CHECK(path_loss_db(100.0, r, rng) == Catch::Approx(40.0 + 51.2).margin(1e-9));
    CHECK_THROWS_AS(path_loss_db(0.0, r, rng), Error);
    CHECK_THROWS_AS(path_loss_db(-5.0, r, rng), Error);

    // exact law over a log-spaced sweep
    for (int k = 0; k <= 60; ++k) {
        const double d = std::pow(10.0, -0.5 + 4.0 * k / 60.0);
        const double want = 40.0 + 10.0 * 2.56 * std::log10(d);
        CHECK(path_loss_db(d, r, rng) == Catch::Approx(want).margin(1e-9));
    }
}

TEST_CASE("shadowing adds reproducible gaussian noise") {
    RadioParams r;
    r.shadow_sigma = 4.0;
    Rng a(7), b(7), c(8);
    const double pa = path_loss_db(50.0, r, a);
    CHECK(path_loss_db(50.0, r, b) == pa);
    CHECK(path_loss_db(50.0, r, c) != pa);

    Rng rng(123);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    const double det = 40.0 + 10.0 * 2.56 * std::log10(50.0);
    for (int i = 0; i < n; ++i) {
        const double x = path_loss_db(50.0, r, rng) - det;
        sum += x;
        sq += x * x;
    }
    CHECK(sum / n == Catch::Approx(0.0).margin(0.1));
    CHECK(std::sqrt(sq / n) == Catch::Approx(4.0).margin(0.1));
}

TEST_CASE("nominal range inverts the path-loss law") {
    RadioParams r = quiet_radio();
    const double closed = nominal_range(r);
    CHECK(closed == Catch::Approx(74.989).margin(0.01));

    // binary search on the monotone law must land on the same distance
    double lo = r.ref_dist, hi = 1e5;
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (r.tx_power - path_loss_db(mid, r, rng) >= r.rx_threshold)
            lo = mid;
        else
            hi = mid;
    }
    CHECK(closed == Catch::Approx(0.5 * (lo + hi)).margin(0.1));
}

TEST_CASE("frame airtime at 2 Mb/s") {
    CHECK(frame_airtime(64, 2e6) == Catch::Approx(392e-6).margin(1e-12));
    CHECK(frame_airtime(1, 2e6) == Catch::Approx(140e-6).margin(1e-12));
}

TEST_CASE("parameter validation") {
    RadioParams r;
    r.cs_threshold = -60.0; // above rx_threshold
    CHECK_THROWS_AS(r.check(), Error);
    r = RadioParams{};
    r.pl_exponent = 0.0;
    CHECK_THROWS_AS(r.check(), Error);

    CbrFlow f = flow(1, 1, 0.0, 10.0);
    CHECK_THROWS_AS(f.check(), Error);
    f = flow(0, 1, 5.0, 1.0);
    CHECK_THROWS_AS(f.check(), Error);
    f = flow(0, 1, 0.0, 10.0);
    f.rate = 0.0;
    CHECK_THROWS_AS(f.check(), Error);

    AodvConfig a;
    a.rreq_rounds = 0;
    CHECK_THROWS_AS(a.check(), Error);

    const MobilityTrace t = static_trace({{0, 0}, {10, 0}}, 10.0);
    CHECK_THROWS_AS(
        run_simulation(t, {flow(0, 2, 0.0, 1.0)}, quiet_radio(), AodvConfig{}, 1.0, 1),
        Error);
    CHECK_THROWS_AS(
        run_simulation(t, {flow(0, 1, 0.0, 1.0)}, quiet_radio(), AodvConfig{}, 99.0, 1),
        Error);
    CbrFlow fat = flow(0, 1, 0.0, 1.0);
    fat.payload = 2300; // + UDP/IP would exceed the MTU
    CHECK_THROWS_AS(run_simulation(t, {fat}, quiet_radio(), AodvConfig{}, 1.0, 1), Error);
}

TEST_CASE("zero flows produce an empty log") {
    const MobilityTrace t = static_trace({{0, 0}, {10, 0}}, 10.0);
    const PacketLog log = run_simulation(t, {}, quiet_radio(), AodvConfig{}, 10.0, 1);
    CHECK(log.packets.empty());
    CHECK(write_packet_log(log) == "flow,seq,send_time,recv_time,delivered,drop_reason\n");
}

TEST_CASE("two nodes in range deliver everything") {
    const MobilityTrace t = static_trace({{0, 0}, {10, 0}}, 10.0);
    const SimOutput out =
        simulate_network(t, {flow(0, 1, 0.0, 10.0)}, quiet_radio(), AodvConfig{}, 10.0, 1);
    CHECK(out.log.sent() == 40);
    CHECK(out.log.received() == 40);
    for (const auto& p : out.log.packets) {
        CHECK(p.delivered);
        CHECK(p.recv_time >= p.send_time);
    }
    // one RREQ/RREP exchange left the textbook route behind
    REQUIRE(out.routes[0].count(1) == 1);
    const AodvEntry& e = out.routes[0].at(1);
    CHECK(e.next_hop == 1);
    CHECK(e.hop_count == 1);
    CHECK(e.valid);
    CHECK(out.stats.rreq_tx == 1);
    CHECK(out.stats.rrep_tx == 1);
    CHECK(out.stats.data_tx >= 40);
    // no node ever stores a route to itself
    for (size_t n = 0; n < out.routes.size(); ++n) {
        CHECK(out.routes[n].count(static_cast<int>(n)) == 0);
        for (const auto& [dest, entry] : out.routes[n]) CHECK(entry.hop_count >= 1);
    }
}

TEST_CASE("nodes far out of range deliver nothing") {
    const MobilityTrace t = static_trace({{0, 0}, {10000, 0}}, 10.0);
    const PacketLog log =
        run_simulation(t, {flow(0, 1, 0.0, 10.0)}, quiet_radio(), AodvConfig{}, 10.0, 1);
    CHECK(log.sent() == 40);
    CHECK(log.received() == 0);
    for (const auto& p : log.packets) CHECK(p.drop_reason == DropReason::no_route);
}

TEST_CASE("reception flips exactly at the nominal range") {
    for (const double d : {74.0, 76.0}) {
        const MobilityTrace t = static_trace({{0, 0}, {d, 0}}, 5.0);
        const PacketLog log =
            run_simulation(t, {flow(0, 1, 0.0, 5.0)}, quiet_radio(), AodvConfig{}, 5.0, 1);
        if (d < 74.989)
            CHECK(log.received() == log.sent());
        else
            CHECK(log.received() == 0);
    }
}

TEST_CASE("three nodes in a line route through the middle") {
    const MobilityTrace t = static_trace({{0, 0}, {70, 0}, {140, 0}}, 10.0);
    const SimOutput out =
        simulate_network(t, {flow(0, 2, 0.0, 10.0)}, quiet_radio(), AodvConfig{}, 10.0, 1);
    CHECK(out.log.received() == out.log.sent());
    REQUIRE(out.routes[0].count(2) == 1);
    CHECK(out.routes[0].at(2).next_hop == 1);
    CHECK(out.routes[0].at(2).hop_count == 2);
    REQUIRE(out.routes[1].count(2) == 1);
    CHECK(out.routes[1].at(2).next_hop == 2);
    CHECK(out.routes[1].at(2).hop_count == 1);
    // the reverse path was installed by the flood
    REQUIRE(out.routes[2].count(0) == 1);
    CHECK(out.routes[2].at(0).hop_count == 2);
}

TEST_CASE("duplicate requests are suppressed by the id cache") {
    // three mutually-in-range nodes flooding for an unreachable target:
    // every node forwards each round exactly once (one packet, one discovery)
    const MobilityTrace t =
        static_trace({{0, 0}, {50, 0}, {25, 43.3}, {10000, 0}}, 5.0);
    const SimOutput out =
        simulate_network(t, {flow(0, 3, 0.0, 0.1)}, quiet_radio(), AodvConfig{}, 5.0, 2);
    CHECK(out.stats.rreq_tx == 9); // 3 nodes x 3 rounds
    CHECK(out.log.received() == 0);
    const auto drops = drop_histogram(out.log);
    CHECK(drops.count(DropReason::no_route));
}

TEST_CASE("a broken link triggers an error report and rediscovery") {
    MobilityTrace t;
    t.duration = 12.0;
    t.width = 10000.0;
    t.height = 1.0;
    t.nodes.resize(3);
    t.nodes[0].wp = {{0.0, {0, 0}, 0.0}};
    t.nodes[1].wp = {{0.0, {60, 0}, 0.0}};
    t.nodes[2].wp = {{0.0, {120, 0}, 0.0}, {3.0, {120, 0}, 3000.0}, {6.0, {9120, 0}, 0.0}};

    const SimOutput out =
        simulate_network(t, {flow(0, 2, 0.0, 12.0)}, quiet_radio(), AodvConfig{}, 12.0, 3);
    const auto drops = drop_histogram(out.log);
    CHECK(out.log.received() >= 8); // the pre-break stretch went through
    CHECK(out.log.received() < out.log.sent());
    CHECK(out.stats.rerr_tx >= 1);
    CHECK(drops.count(DropReason::mac_retry_limit));
    CHECK(drops.count(DropReason::no_route));
    // the source learned the route is dead
    REQUIRE(out.routes[0].count(2) == 1);
    CHECK_FALSE(out.routes[0].at(2).valid);
}

TEST_CASE("overload spills the interface queue") {
    const MobilityTrace t = static_trace({{0, 0}, {10, 0}}, 2.0);
    CbrFlow f = flow(0, 1, 0.0, 1.0);
    f.rate = 4000.0;
    const SimOutput out = simulate_network(t, {f}, quiet_radio(), AodvConfig{}, 2.0, 4);
    const auto drops = drop_histogram(out.log);
    CHECK(drops.count(DropReason::queue_overflow));
    CHECK(out.log.received() > 0);
    long long terminal = out.log.received();
    for (const auto& [reason, n] : drops) terminal += n;
    CHECK(terminal == out.log.sent());
}

TEST_CASE("packet accounting is conserved under fading and motion") {
    RwpSpec spec;
    spec.n_nodes = 8;
    spec.width = spec.height = 200.0;
    spec.v_min = 1.0;
    spec.v_max = 10.0;
    spec.duration = 30.0;
    spec.seed = 11;
    const MobilityTrace t = random_waypoint(spec);
    RadioParams radio; // sigma = 4 dB
    const std::vector<CbrFlow> flows{flow(0, 5, 0.0, 30.0), flow(3, 1, 2.0, 25.0),
                                     flow(7, 2, 5.0, 30.0), flow(6, 4, 0.5, 20.0)};
    const SimOutput out = simulate_network(t, flows, radio, AodvConfig{}, 30.0, 5);
    CHECK(out.log.sent() > 0);
    long long delivered = 0;
    std::map<int, std::pair<long long, long long>> per_flow;
    for (const auto& p : out.log.packets) {
        per_flow[p.flow].first += 1;
        if (p.delivered) {
            ++delivered;
            per_flow[p.flow].second += 1;
            CHECK(p.recv_time >= p.send_time);
            CHECK(p.drop_reason == DropReason::none);
        } else {
            CHECK(p.drop_reason != DropReason::none);
        }
    }
    CHECK(delivered == out.log.received());
    // per-flow injection counts match the CBR schedule
    for (const auto& fl : flows) {
        const double span = std::min(fl.stop, 30.0) - fl.start;
        const long long expect = static_cast<long long>(std::ceil(span * fl.rate - 1e-9));
        bool found = false;
        for (const auto& [idx, counts] : per_flow)
            if (flows[idx].src == fl.src && flows[idx].dst == fl.dst) {
                CHECK(counts.first == expect);
                found = true;
            }
        CHECK(found);
    }
}

TEST_CASE("identical runs produce identical logs") {
    const MobilityTrace t = static_trace({{0, 0}, {75, 0}}, 10.0);
    RadioParams radio; // shadowing on: outcomes hinge on the draws
    const PacketLog a = run_simulation(t, {flow(0, 1, 0.0, 10.0)}, radio, AodvConfig{}, 10.0, 9);
    const PacketLog b = run_simulation(t, {flow(0, 1, 0.0, 10.0)}, radio, AodvConfig{}, 10.0, 9);
    CHECK(write_packet_log(a) == write_packet_log(b));
    const PacketLog c = run_simulation(t, {flow(0, 1, 0.0, 10.0)}, radio, AodvConfig{}, 10.0, 10);
    CHECK(write_packet_log(a) != write_packet_log(c));
}

TEST_CASE("intermediate nodes with fresh routes may answer requests") {
    // line a-b-c: warm b's route to c with one flow, then a's discovery for c
    // can be answered by b without the flood reaching c
    const MobilityTrace t = static_trace({{0, 0}, {70, 0}, {140, 0}}, 20.0);
    AodvConfig cfg;
    cfg.intermediate_rrep = true;
    const std::vector<CbrFlow> flows{flow(1, 2, 0.0, 20.0), flow(0, 2, 10.0, 20.0)};
    const SimOutput out = simulate_network(t, flows, quiet_radio(), cfg, 20.0, 6);
    CHECK(out.log.received() == out.log.sent());
    REQUIRE(out.routes[0].count(2) == 1);
    CHECK(out.routes[0].at(2).next_hop == 1);
    CHECK(out.routes[0].at(2).hop_count == 2);
}

TEST_CASE("packet log serialization") {
    PacketLog log;
    log.packets.push_back({0, 0, 0.25, true, 0.3125, DropReason::none});
    log.packets.push_back({1, 4, 1.5, false, 0.0, DropReason::ttl_expired});
    CHECK(write_packet_log(log) ==
          "flow,seq,send_time,recv_time,delivered,drop_reason\n"
          "0,0,0.25,0.3125,1,none\n"
          "1,4,1.5,,0,ttl_expired\n");
}
