// Deterministic discrete-event wireless network simulator over a mobility
// trace: log-normal shadowing channel, a simplified 802.11 DCF MAC, AODV
// routing, and CBR/UDP application flows.
//
// Model summary
//   channel  log-normal shadowing (exponent n, dB-sigma drawn i.i.d. per
//            transmission and receiver), zero propagation delay, no capture:
//            any overlap of two sensed frames at a receiver destroys both.
//   MAC      carrier sense against cs_threshold; every access waits
//            DIFS + uniform backoff slots; unicast needs an ACK after SIFS
//            and retries up to 7 times with a doubling contention window;
//            broadcast is sent once. Half duplex.
//   routing  AODV: RREQ flood with duplicate cache and TTL, reverse-route
//            installation, destination RREP (optionally also from
//            intermediates with a fresh route), sequence-number freshness,
//            RERR on link failure, data buffered during discovery.
//   traffic  fixed-size UDP payloads at a constant packet rate per flow.
//
// Everything runs in one sequential event loop ordered by (time, insertion
// sequence); identical inputs and seed give identical packet logs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "core.hpp"
#include "mobility.hpp"

namespace vanet {

// ---------------------------------------------------------------------------
// Radio channel.
// ---------------------------------------------------------------------------

struct RadioParams {
    double pl_exponent = 2.56;   // path-loss exponent n
    double shadow_sigma = 4.0;   // shadowing standard deviation, dB
    double ref_dist = 1.0;       // reference distance d0, m
    double ref_loss = 40.0;      // path loss at d0, dB
    double tx_power = 24.0;      // dBm
    double rx_threshold = -64.0; // minimum decodable power, dBm
    double cs_threshold = -74.0; // carrier-sense / interference floor, dBm
    double bitrate = 2e6;        // bit/s

    void check() const {
        if (!(pl_exponent > 0)) throw Error("radio: pl_exponent must be > 0");
        if (!(shadow_sigma >= 0)) throw Error("radio: shadow_sigma must be >= 0");
        if (!(ref_dist > 0)) throw Error("radio: ref_dist must be > 0");
        if (!(cs_threshold <= rx_threshold))
            throw Error("radio: cs_threshold must be <= rx_threshold");
        if (!(bitrate > 0)) throw Error("radio: bitrate must be > 0");
    }
};

/// Path loss in dB over distance d: deterministic distance decay plus (for
/// sigma > 0) one Gaussian shadowing draw from `rng`.
inline double path_loss_db(double d, const RadioParams& radio, Rng& rng) {
    if (!(d > 0)) throw Error("path_loss_db: distance must be > 0");
    double pl = radio.ref_loss + 10.0 * radio.pl_exponent * std::log10(d / radio.ref_dist);
    if (radio.shadow_sigma > 0) pl += rng.normal(0.0, radio.shadow_sigma);
    return pl;
}

/// Time a frame of `frame_bytes` occupies the channel (34 bytes of MAC
/// framing are added on air).
inline double frame_airtime(int frame_bytes, double bitrate) {
    return (frame_bytes + 34) * 8.0 / bitrate;
}

/// Distance at which the median received power equals rx_threshold.
inline double nominal_range(const RadioParams& radio) {
    radio.check();
    return radio.ref_dist *
           std::pow(10.0, (radio.tx_power - radio.rx_threshold - radio.ref_loss) /
                              (10.0 * radio.pl_exponent));
}

// ---------------------------------------------------------------------------
// Traffic, packet accounting, routing-table entries.
// ---------------------------------------------------------------------------

struct CbrFlow {
    int src = 0;
    int dst = 0;
    int payload = 64;  // application bytes per packet
    double rate = 4.0; // packets per second
    double start = 0.0;
    double stop = 0.0;

    void check() const {
        if (src == dst) throw Error("flow: src and dst must differ");
        if (payload <= 0) throw Error("flow: payload must be > 0");
        if (!(rate > 0)) throw Error("flow: rate must be > 0");
        if (!(start >= 0) || !(stop >= start)) throw Error("flow: need 0 <= start <= stop");
    }
};

enum class DropReason { none, no_route, mac_retry_limit, queue_overflow, ttl_expired, end_of_run };

inline const char* drop_reason_name(DropReason r) {
    switch (r) {
        case DropReason::none: return "none";
        case DropReason::no_route: return "no_route";
        case DropReason::mac_retry_limit: return "mac_retry_limit";
        case DropReason::queue_overflow: return "queue_overflow";
        case DropReason::ttl_expired: return "ttl_expired";
        case DropReason::end_of_run: return "end_of_run";
    }
    return "?";
}

struct PacketRecord {
    int flow = 0;
    long long seq = 0;
    double send_time = 0.0;
    bool delivered = false;
    double recv_time = 0.0;
    DropReason drop_reason = DropReason::none;
};

struct PacketLog {
    std::vector<PacketRecord> packets;

    long long sent() const { return static_cast<long long>(packets.size()); }
    long long received() const {
        long long n = 0;
        for (const auto& p : packets) n += p.delivered ? 1 : 0;
        return n;
    }
};

/// One row of a node's AODV routing table.
struct AodvEntry {
    int dest = 0;
    int next_hop = 0;
    int hop_count = 0;
    std::uint32_t dest_seq = 0;
    bool seq_known = false;
    double valid_until = 0.0;
    bool valid = false;
};

struct AodvConfig {
    bool intermediate_rrep = false; // fresh-route intermediates may answer RREQs
    int rreq_rounds = 3;            // discovery attempts before giving up
    double round_timeout = 1.0;     // s per attempt
    double route_lifetime = 3.0;    // s, refreshed by use
    int net_ttl = 30;               // RREQ and data TTL, hops
    int buffer_limit = 64;          // data packets buffered per destination
    int ifq_limit = 50;             // MAC interface queue length
    // Ignore route requests that arrive with less than this margin (dB) over
    // the reception threshold.  Under random per-frame fading a request can
    // sneak across a link that will then fail for everything else, and routes
    // built on such links thrash; demanding headroom keeps discovery on links
    // that data and replies can actually cross.  0 accepts every request.
    double rreq_accept_margin = 0.0;
    // When forwarding fails mid-path, let the relay buffer the data and run a
    // depth-limited rediscovery itself instead of discarding the packet and
    // reporting the route dead; only a failed repair is reported upstream.
    bool local_repair = false;
    // Search in expanding rings (flood depths 1, 3, then network-wide) rather
    // than flooding the whole network every round.  Most destinations are
    // found a few hops out, so this trades a little discovery latency for far
    // less broadcast traffic on the channel.
    bool expanding_ring = false;
    // After a discovery fails, wait out a binary-exponential holdoff (2, 4,
    // then 8 round timeouts, reset by any success) before searching for that
    // destination again.  An unreachable destination otherwise keeps a source
    // flooding the channel nonstop, and those floods are what break everyone
    // else's traffic when many sources are active.
    bool discovery_backoff = false;

    void check() const {
        if (rreq_rounds < 1) throw Error("aodv: rreq_rounds must be >= 1");
        if (!(round_timeout > 0)) throw Error("aodv: round_timeout must be > 0");
        if (!(route_lifetime > 0)) throw Error("aodv: route_lifetime must be > 0");
        if (net_ttl < 1) throw Error("aodv: net_ttl must be >= 1");
        if (buffer_limit < 0) throw Error("aodv: buffer_limit must be >= 0");
        if (ifq_limit < 1) throw Error("aodv: ifq_limit must be >= 1");
        if (rreq_accept_margin < 0)
            throw Error("aodv: rreq_accept_margin must be >= 0");
    }
};

struct NetStats {
    long long data_tx = 0;
    long long rreq_tx = 0;
    long long rrep_tx = 0;
    long long rerr_tx = 0;
    long long ack_tx = 0;
    long long control_queue_drops = 0;
};

struct SimOutput {
    PacketLog log;
    NetStats stats;
    std::vector<std::map<int, AodvEntry>> routes; // final table per node
};

// ---------------------------------------------------------------------------
// Engine internals.
// ---------------------------------------------------------------------------

namespace detail {

// MAC timing and size constants (802.11 DCF flavoured, 2 Mb/s class).
constexpr double difs = 50e-6;
constexpr double sifs = 10e-6;
constexpr double slot_time = 20e-6;
constexpr int cw_min = 31;
constexpr int cw_max = 1023;
constexpr int max_retries = 7;     // retransmissions after the first attempt
constexpr int frame_overhead = 34; // keep in sync with frame_airtime above
constexpr int ack_bytes = 38;      // ACK size on air, no further overhead
constexpr int udp_ip_bytes = 28;   // UDP + IP headers around every payload
constexpr int mtu = 2304;
constexpr int rreq_bytes = 24;
constexpr int rrep_bytes = 20;
constexpr int rerr_base_bytes = 4; // plus 8 per unreachable destination
// Relays that heard the same flood copy would otherwise contend for the
// channel in the same backoff window and wipe each other out; a short random
// forwarding delay desynchronises them (standard practice in on-demand
// routing implementations).
constexpr double rreq_fwd_jitter = 0.01; // s, uniform upper bound

/// Newer-than comparison on circular 32-bit sequence numbers.
inline bool seq_newer(std::uint32_t a, std::uint32_t b) {
    return static_cast<std::int32_t>(a - b) > 0;
}

struct DataPkt {
    int flow = 0;
    long long seq = 0;
    int origin = 0;
    int dest = 0;
    int ttl = 0;
};

struct RreqMsg {
    int origin = 0;
    int dest = 0;
    int hop_count = 0;
    int ttl = 0;
    std::uint32_t origin_seq = 0;
    std::uint32_t dest_seq = 0;
    bool dest_seq_known = false;
    std::uint32_t rreq_id = 0;
};

struct RrepMsg {
    int origin = 0; // the route requester the reply travels back to
    int dest = 0;   // the route's destination
    int hop_count = 0;
    std::uint32_t dest_seq = 0;
};

enum class FrameKind : std::uint8_t { data, rreq, rrep, rerr, ack };

struct Frame {
    std::uint64_t uid = 0;
    FrameKind kind = FrameKind::data;
    int src = 0;
    int dst = -1; // -1 broadcasts
    int bytes = 0;
    DataPkt data;
    RreqMsg rreq;
    RrepMsg rrep;
    std::vector<std::pair<int, std::uint32_t>> rerr; // (dest, seq)
    std::uint64_t ack_uid = 0;
};

enum class EvKind : std::uint8_t {
    inject,
    try_tx,
    tx_end,
    ack_send,
    ack_timeout,
    rreq_round,
    fwd_held
};

struct Event {
    double t = 0.0;
    std::uint64_t order = 0;
    EvKind kind = EvKind::inject;
    int node = 0;
    std::uint64_t id = 0;
    int aux = 0;
    long long seq = 0;
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.order > b.order;
    }
};

struct Arrival {
    int node = 0;
    double power = 0.0;
    bool corrupted = false;
};

struct Signal {
    int sender = 0;
    double end = 0.0;
    Frame frame;
    std::vector<Arrival> arrivals;
};

enum class MacState : std::uint8_t { idle, access, transmitting, wait_ack };

struct NodeMac {
    std::deque<Frame> ifq;
    std::optional<Frame> current;
    MacState state = MacState::idle;
    int retries = 0;
    int cw = cw_min;
    std::uint64_t access_gen = 0;
    double busy_until = 0.0;       // channel as sensed here
    double tx_until = 0.0;         // own transmission in progress
    double self_block_until = 0.0; // reserved for a pending ACK send
    std::vector<std::pair<std::uint64_t, double>> arriving; // (signal, end)
    std::map<int, std::uint64_t> last_uid_from;             // unicast dedup
};

struct Discovery {
    int round = 0;
    std::uint64_t gen = 0;
    int ttl = 0;         // flood depth for this search (0 = network-wide)
    bool repair = false; // a relay mending a broken path, not an origin
};

struct NodeAodv {
    std::map<int, AodvEntry> routes;
    std::uint32_t own_seq = 0;
    std::uint32_t next_rreq_id = 0;
    // rreq ids rise monotonically per origin, so remembering the newest one
    // seen from each origin suppresses every duplicate copy
    std::map<int, std::uint32_t> seen_rreq;
    std::map<int, Discovery> pending;          // dest -> discovery state
    std::map<int, std::deque<DataPkt>> buffer; // dest -> waiting data
};

struct Sim {
    const MobilityTrace& trace;
    const std::vector<CbrFlow>& flows;
    RadioParams radio;
    AodvConfig aodv;
    double duration;
    Rng rng;

    std::priority_queue<Event, std::vector<Event>, EventLater> queue;
    std::uint64_t next_order = 0;
    std::uint64_t next_uid = 1;
    std::uint64_t next_signal = 1;
    std::uint64_t next_disc_gen = 1;
    std::map<std::uint64_t, Signal> signals;
    std::map<std::uint64_t, Frame> held; // frames waiting out a forwarding delay
    std::vector<NodeMac> mac;
    std::vector<NodeAodv> rt;
    std::vector<size_t> cursor; // per-node waypoint cursor (time is monotone)
    std::map<std::pair<int, long long>, size_t> record_of;
    SimOutput out;
    double now = 0.0;

    Sim(const MobilityTrace& tr, const std::vector<CbrFlow>& fl, const RadioParams& ra,
        const AodvConfig& cfg, double dur, std::uint64_t seed)
        : trace(tr), flows(fl), radio(ra), aodv(cfg), duration(dur),
          rng(derive_seed(seed, "netsim")) {
        mac.resize(trace.nodes.size());
        rt.resize(trace.nodes.size());
        cursor.assign(trace.nodes.size(), 0);
    }

    // --- plumbing ---------------------------------------------------------

    void schedule(double t, EvKind kind, int node, std::uint64_t id = 0, int aux = 0,
                  long long seq = 0) {
        queue.push({t, next_order++, kind, node, id, aux, seq});
    }

    Vec2 position(int node, double t) {
        const auto& wp = trace.nodes[node].wp;
        size_t& c = cursor[node];
        while (c + 1 < wp.size() && wp[c + 1].t <= t) ++c;
        if (t <= wp[c].t || c + 1 >= wp.size()) return wp[std::min(c, wp.size() - 1)].pos;
        const auto& a = wp[c];
        const auto& b = wp[c + 1];
        const double f = (t - a.t) / (b.t - a.t);
        return a.pos + (b.pos - a.pos) * f;
    }

    double airtime(int bytes) const { return frame_airtime(bytes, radio.bitrate); }

    PacketRecord& record(const DataPkt& p) { return out.log.packets[record_of.at({p.flow, p.seq})]; }

    void drop(const DataPkt& p, DropReason why) {
        PacketRecord& r = record(p);
        if (!r.delivered && r.drop_reason == DropReason::none) r.drop_reason = why;
    }

    // --- MAC --------------------------------------------------------------

    void enqueue(int node, Frame f, double t) {
        NodeMac& m = mac[node];
        if (static_cast<int>(m.ifq.size()) >= aodv.ifq_limit) {
            if (f.kind == FrameKind::data)
                drop(f.data, DropReason::queue_overflow);
            else
                ++out.stats.control_queue_drops;
            return;
        }
        m.ifq.push_back(std::move(f));
        kick(node, t);
    }

    void kick(int node, double t) {
        NodeMac& m = mac[node];
        if (m.state != MacState::idle || m.ifq.empty()) return;
        m.current = std::move(m.ifq.front());
        m.ifq.pop_front();
        m.retries = 0;
        m.cw = cw_min;
        access(node, t);
    }

    void access(int node, double t) {
        NodeMac& m = mac[node];
        m.state = MacState::access;
        const double base = std::max({t, m.busy_until, m.tx_until, m.self_block_until});
        const double backoff =
            difs + slot_time * static_cast<double>(rng.uniform_int(
                                   static_cast<std::uint64_t>(m.cw) + 1));
        schedule(base + backoff, EvKind::try_tx, node, ++m.access_gen);
    }

    void ev_try_tx(int node, std::uint64_t gen, double t) {
        NodeMac& m = mac[node];
        if (m.state != MacState::access || m.access_gen != gen) return;
        if (m.busy_until > t || m.tx_until > t || m.self_block_until > t) {
            access(node, t); // still busy: back off again
            return;
        }
        m.state = MacState::transmitting;
        start_tx(node, *m.current, t);
    }

    void start_tx(int node, const Frame& f, double t) {
        NodeMac& m = mac[node];
        const double air = airtime(f.kind == FrameKind::ack ? ack_bytes - frame_overhead
                                                            : f.bytes);
        m.tx_until = t + air;
        // transmitting tramples anything currently arriving here (half duplex)
        for (const auto& [sid, end] : m.arriving)
            if (end > t) {
                Signal& s = signals.at(sid);
                for (auto& a : s.arrivals)
                    if (a.node == node) a.corrupted = true;
            }
        switch (f.kind) {
            case FrameKind::data: ++out.stats.data_tx; break;
            case FrameKind::rreq: ++out.stats.rreq_tx; break;
            case FrameKind::rrep: ++out.stats.rrep_tx; break;
            case FrameKind::rerr: ++out.stats.rerr_tx; break;
            case FrameKind::ack: ++out.stats.ack_tx; break;
        }

        const std::uint64_t sid = next_signal++;
        Signal sig;
        sig.sender = node;
        sig.end = t + air;
        sig.frame = f;
        const Vec2 from = position(node, t);
        for (int j = 0; j < static_cast<int>(trace.nodes.size()); ++j) {
            if (j == node) continue;
            const double d = std::max(distance(from, position(j, t)), radio.ref_dist);
            const double power = radio.tx_power - path_loss_db(d, radio, rng);
            if (power < radio.cs_threshold) continue;
            NodeMac& rx = mac[j];
            Arrival arr{j, power, false};
            if (rx.tx_until > t) arr.corrupted = true; // busy talking itself
            // Overlapping decodable frames destroy each other; arrivals too
            // weak to decode only keep the channel sensed busy.
            std::vector<std::pair<std::uint64_t, double>> live;
            for (const auto& [osid, oend] : rx.arriving) {
                if (oend <= t) continue;
                live.emplace_back(osid, oend);
                if (power < radio.rx_threshold) continue;
                Signal& other = signals.at(osid);
                for (auto& a : other.arrivals)
                    if (a.node == j && a.power >= radio.rx_threshold) {
                        a.corrupted = true;
                        arr.corrupted = true;
                    }
            }
            rx.arriving = std::move(live);
            rx.arriving.emplace_back(sid, sig.end);
            rx.busy_until = std::max(rx.busy_until, sig.end);
            sig.arrivals.push_back(arr);
        }
        signals.emplace(sid, std::move(sig));
        schedule(t + air, EvKind::tx_end, node, sid);
    }

    void ev_tx_end(std::uint64_t sid, double t) {
        const auto it = signals.find(sid);
        if (it == signals.end()) return;
        Signal sig = std::move(it->second);
        signals.erase(it);

        bool acked_expected = false;
        for (const auto& a : sig.arrivals) {
            if (a.corrupted || a.power < radio.rx_threshold) continue;
            if (sig.frame.dst != -1 && sig.frame.dst != a.node) continue; // not for us
            receive(a.node, sig.sender, sig.frame, a.power, t);
            if (sig.frame.dst == a.node && sig.frame.kind != FrameKind::ack)
                acked_expected = true;
        }

        NodeMac& m = mac[sig.sender];
        if (sig.frame.kind == FrameKind::ack) return; // fire and forget
        if (m.state != MacState::transmitting || !m.current ||
            m.current->uid != sig.frame.uid)
            return;
        if (sig.frame.dst == -1) { // broadcast: done
            finish_current(sig.sender, t);
            return;
        }
        // unicast: await the ACK (the receiver schedules it SIFS after us)
        m.state = MacState::wait_ack;
        const double ack_air = airtime(ack_bytes - frame_overhead);
        schedule(t + sifs + ack_air + slot_time, EvKind::ack_timeout, sig.sender,
                 sig.frame.uid, m.retries);
        (void)acked_expected;
    }

    void finish_current(int node, double t) {
        NodeMac& m = mac[node];
        m.current.reset();
        m.state = MacState::idle;
        m.retries = 0;
        m.cw = cw_min;
        kick(node, t);
    }

    void ev_ack_timeout(int node, std::uint64_t uid, int attempt, double t) {
        NodeMac& m = mac[node];
        if (m.state != MacState::wait_ack || !m.current || m.current->uid != uid ||
            m.retries != attempt)
            return;
        if (m.retries >= max_retries) { // 1 + 7 attempts exhausted
            const Frame failed = *m.current;
            finish_current(node, t);
            link_failed(node, failed, t);
            return;
        }
        ++m.retries;
        m.cw = std::min(cw_max, m.cw * 2 + 1);
        access(node, t);
    }

    void ev_ack_send(int node, int to, std::uint64_t uid, double t) {
        NodeMac& m = mac[node];
        if (m.tx_until > t) return; // physically impossible to honour
        Frame ack;
        ack.uid = next_uid++;
        ack.kind = FrameKind::ack;
        ack.src = node;
        ack.dst = to;
        ack.bytes = ack_bytes;
        ack.ack_uid = uid;
        start_tx(node, ack, t);
    }

    void receive(int node, int sender, const Frame& f, double power, double t) {
        NodeMac& m = mac[node];
        if (f.kind == FrameKind::ack) {
            NodeMac& me = mac[f.dst];
            if (me.state == MacState::wait_ack && me.current &&
                me.current->uid == f.ack_uid)
                finish_current(f.dst, t);
            return;
        }
        bool duplicate = false;
        if (f.dst != -1) { // unicast: ACK always, deliver once
            auto [it, fresh] = m.last_uid_from.try_emplace(sender, f.uid);
            if (!fresh) {
                duplicate = it->second == f.uid;
                it->second = f.uid;
            }
            m.self_block_until =
                std::max(m.self_block_until, t + sifs + airtime(ack_bytes - frame_overhead));
            schedule(t + sifs, EvKind::ack_send, node, f.uid, sender);
        }
        if (!duplicate) deliver_up(node, sender, f, power, t);
    }

    // --- AODV -------------------------------------------------------------

    bool route_valid(const AodvEntry& e, double t) const { return e.valid && e.valid_until > t; }

    AodvEntry* find_route(int node, int dest) {
        auto it = rt[node].routes.find(dest);
        return it == rt[node].routes.end() ? nullptr : &it->second;
    }

    void refresh_route(int node, int dest, double t) {
        if (AodvEntry* e = find_route(node, dest); e && route_valid(*e, t))
            e->valid_until = std::max(e->valid_until, t + aodv.route_lifetime);
    }

    /// Create or refresh the one-hop entry for a heard neighbour.
    void touch_neighbor(int node, int nb, double t) {
        AodvEntry* e = find_route(node, nb);
        if (!e) {
            rt[node].routes[nb] = {nb, nb, 1, 0, false, t + aodv.route_lifetime, true};
        } else if (route_valid(*e, t)) {
            e->valid_until = std::max(e->valid_until, t + aodv.route_lifetime);
        } else {
            e->next_hop = nb;
            e->hop_count = 1;
            e->valid = true;
            e->valid_until = t + aodv.route_lifetime;
        }
    }

    /// Sequence-number-aware route update (newer seq, or same seq and
    /// shorter/replacing an invalid route, or the table had no known seq).
    bool update_route(int node, int dest, int next_hop, int hops, std::uint32_t seqno,
                      double t) {
        AodvEntry* e = find_route(node, dest);
        const bool take = !e || !e->seq_known || seq_newer(seqno, e->dest_seq) ||
                          (seqno == e->dest_seq && (!e->valid || hops < e->hop_count));
        if (!take) {
            if (e && route_valid(*e, t) && seqno == e->dest_seq)
                e->valid_until = std::max(e->valid_until, t + aodv.route_lifetime);
            return false;
        }
        rt[node].routes[dest] = {dest, next_hop, hops, seqno, true, t + aodv.route_lifetime, true};
        return true;
    }

    void deliver_up(int node, int sender, const Frame& f, double power, double t) {
        if (f.kind == FrameKind::rreq &&
            power < radio.rx_threshold + aodv.rreq_accept_margin)
            return; // too little headroom to build a route on this link
        touch_neighbor(node, sender, t);
        switch (f.kind) {
            case FrameKind::data: handle_data(node, sender, f.data, t); break;
            case FrameKind::rreq: handle_rreq(node, sender, f.rreq, t); break;
            case FrameKind::rrep: handle_rrep(node, sender, f.rrep, t); break;
            case FrameKind::rerr: handle_rerr(node, sender, f.rerr, t); break;
            case FrameKind::ack: break;
        }
    }

    void send_data_frame(int node, const DataPkt& p, int next_hop, double t) {
        Frame f;
        f.uid = next_uid++;
        f.kind = FrameKind::data;
        f.src = node;
        f.dst = next_hop;
        f.bytes = flows[p.flow].payload + udp_ip_bytes;
        f.data = p;
        enqueue(node, std::move(f), t);
    }

    void broadcast(int node, Frame f, double t) {
        f.uid = next_uid++;
        f.src = node;
        f.dst = -1;
        enqueue(node, std::move(f), t);
    }

    /// Broadcast after a uniform random delay in [0, max_delay).
    void broadcast_delayed(int node, Frame f, double t, double max_delay) {
        f.uid = next_uid++;
        f.src = node;
        f.dst = -1;
        const std::uint64_t uid = f.uid;
        held.emplace(uid, std::move(f));
        schedule(t + rng.uniform(0.0, max_delay), EvKind::fwd_held, node, uid);
    }

    void ev_fwd_held(int node, std::uint64_t uid, double t) {
        const auto it = held.find(uid);
        if (it == held.end()) return;
        Frame f = std::move(it->second);
        held.erase(it);
        enqueue(node, std::move(f), t);
    }

    void send_rreq(int node, int dest, int ttl, double t) {
        NodeAodv& a = rt[node];
        ++a.own_seq;
        Frame f;
        f.kind = FrameKind::rreq;
        f.bytes = rreq_bytes + udp_ip_bytes;
        f.rreq.origin = node;
        f.rreq.dest = dest;
        f.rreq.hop_count = 0;
        f.rreq.ttl = ttl > 0 ? std::min(ttl, aodv.net_ttl) : aodv.net_ttl;
        f.rreq.origin_seq = a.own_seq;
        f.rreq.rreq_id = ++a.next_rreq_id;
        if (const AodvEntry* e = find_route(node, dest); e && e->seq_known) {
            f.rreq.dest_seq = e->dest_seq;
            f.rreq.dest_seq_known = true;
        }
        a.seen_rreq[node] = f.rreq.rreq_id;
        broadcast(node, std::move(f), t);
    }

    void start_discovery(int node, int dest, double t, int ttl = 0,
                         bool repair = false) {
        NodeAodv& a = rt[node];
        if (a.pending.count(dest)) return; // already searching
        if (ttl == 0 && aodv.expanding_ring) ttl = 1; // first ring
        Discovery d{1, next_disc_gen++, ttl, repair};
        a.pending[dest] = d;
        send_rreq(node, dest, d.ttl, t);
        schedule(t + aodv.round_timeout, EvKind::rreq_round, node, d.gen, dest);
    }

    /// Re-offer everything buffered for `dest` now that a route may exist.
    void flush_buffer(int node, int dest, double t) {
        NodeAodv& a = rt[node];
        const auto buf = a.buffer.find(dest);
        if (buf == a.buffer.end()) return;
        std::deque<DataPkt> pkts = std::move(buf->second);
        a.buffer.erase(buf);
        for (const DataPkt& p : pkts) originate(node, p, t);
    }

    void ev_rreq_round(int node, int dest, std::uint64_t gen, double t) {
        NodeAodv& a = rt[node];
        const auto it = a.pending.find(dest);
        if (it == a.pending.end() || it->second.gen != gen) return;
        if (AodvEntry* e = find_route(node, dest); e && route_valid(*e, t)) {
            a.pending.erase(it); // resolved meanwhile (e.g. an overheard flood)
            flush_buffer(node, dest, t);
            return;
        }
        if (it->second.round >= aodv.rreq_rounds) { // give up
            const bool was_repair = it->second.repair;
            auto buf = a.buffer.find(dest);
            if (buf != a.buffer.end()) {
                for (const DataPkt& p : buf->second) drop(p, DropReason::no_route);
                a.buffer.erase(buf);
            }
            a.pending.erase(it);
            if (was_repair) {
                // The mid-path mend failed; now the sources upstream do need
                // to hear that this destination is unreachable through here.
                const AodvEntry* e = find_route(node, dest);
                send_rerr(node, {{dest, e ? e->dest_seq : 0}}, t);
            }
            return;
        }
        it->second.round += 1;
        it->second.gen = next_disc_gen++;
        if (aodv.expanding_ring && !it->second.repair) // widen the ring:
            it->second.ttl = it->second.round == 2 ? 3 : 0; // 1, 3, then all
        send_rreq(node, dest, it->second.ttl, t);
        schedule(t + aodv.round_timeout, EvKind::rreq_round, node, it->second.gen, dest);
    }

    /// Entry point for locally-originated data.
    void originate(int node, DataPkt p, double t) {
        AodvEntry* e = find_route(node, p.dest);
        if (e && route_valid(*e, t)) {
            e->valid_until = std::max(e->valid_until, t + aodv.route_lifetime);
            refresh_route(node, e->next_hop, t);
            send_data_frame(node, p, e->next_hop, t);
            return;
        }
        NodeAodv& a = rt[node];
        auto& buf = a.buffer[p.dest];
        if (static_cast<int>(buf.size()) >= aodv.buffer_limit) {
            drop(p, DropReason::queue_overflow);
        } else {
            buf.push_back(p);
        }
        start_discovery(node, p.dest, t);
    }

    void handle_data(int node, int sender, DataPkt p, double t) {
        refresh_route(node, sender, t);
        if (p.origin != node) refresh_route(node, p.origin, t);
        if (node == p.dest) {
            PacketRecord& r = record(p);
            if (!r.delivered) {
                // Arrival wins over an earlier upstream loss report: a relay
                // that exhausted its ACK retries may still have gotten the
                // data through (only the ACKs were lost).
                r.delivered = true;
                r.recv_time = t;
                r.drop_reason = DropReason::none;
            }
            return;
        }
        p.ttl -= 1;
        if (p.ttl <= 0) {
            drop(p, DropReason::ttl_expired);
            return;
        }
        AodvEntry* e = find_route(node, p.dest);
        if (!e || !route_valid(*e, t)) {
            int stale_hops = 0;
            if (e) {
                stale_hops = e->hop_count;
                if (e->seq_known) ++e->dest_seq;
                e->valid = false;
            }
            if (aodv.local_repair) {
                // Mend the path here instead of reporting it dead: park the
                // packet and search just deep enough to reach the old route.
                repair_route(node, p, stale_hops, t);
            } else {
                // broken path: report back and discard
                drop(p, DropReason::no_route);
                send_rerr(node, {{p.dest, e ? e->dest_seq : 0}}, t);
            }
            return;
        }
        e->valid_until = std::max(e->valid_until, t + aodv.route_lifetime);
        refresh_route(node, e->next_hop, t);
        send_data_frame(node, p, e->next_hop, t);
    }

    void handle_rreq(int node, int sender, RreqMsg m, double t) {
        NodeAodv& a = rt[node];
        if (m.origin == node) return;
        const auto [it, fresh] = a.seen_rreq.try_emplace(m.origin, m.rreq_id);
        if (!fresh) {
            if (!seq_newer(m.rreq_id, it->second)) return; // duplicate copy
            it->second = m.rreq_id;
        }
        m.hop_count += 1;
        update_route(node, m.origin, sender, m.hop_count, m.origin_seq, t);

        if (m.dest == node) {
            if (m.dest_seq_known && seq_newer(m.dest_seq, a.own_seq)) a.own_seq = m.dest_seq;
            send_rrep(node, m.origin, node, 0, a.own_seq, t);
            return;
        }
        if (aodv.intermediate_rrep) {
            if (AodvEntry* e = find_route(node, m.dest);
                e && route_valid(*e, t) && e->seq_known &&
                (!m.dest_seq_known || !seq_newer(m.dest_seq, e->dest_seq))) {
                send_rrep(node, m.origin, m.dest, e->hop_count, e->dest_seq, t);
                return;
            }
        }
        m.ttl -= 1;
        if (m.ttl <= 0) return;
        Frame f;
        f.kind = FrameKind::rreq;
        f.bytes = rreq_bytes + udp_ip_bytes;
        f.rreq = m;
        broadcast_delayed(node, std::move(f), t, rreq_fwd_jitter);
    }

    void send_rrep(int node, int origin, int dest, int hops, std::uint32_t dest_seq, double t) {
        AodvEntry* back = find_route(node, origin);
        if (!back || !route_valid(*back, t)) return; // reverse path already gone
        Frame f;
        f.uid = next_uid++;
        f.kind = FrameKind::rrep;
        f.src = node;
        f.dst = back->next_hop;
        f.bytes = rrep_bytes + udp_ip_bytes;
        f.rrep = {origin, dest, hops, dest_seq};
        enqueue(node, std::move(f), t);
    }

    void handle_rrep(int node, int sender, RrepMsg m, double t) {
        m.hop_count += 1;
        update_route(node, m.dest, sender, m.hop_count, m.dest_seq, t);
        if (m.origin == node) { // our discovery finished: release the buffer
            rt[node].pending.erase(m.dest);
            flush_buffer(node, m.dest, t);
            return;
        }
        send_rrep(node, m.origin, m.dest, m.hop_count, m.dest_seq, t);
    }

    void send_rerr(int node, const std::vector<std::pair<int, std::uint32_t>>& lost, double t) {
        if (lost.empty()) return;
        Frame f;
        f.kind = FrameKind::rerr;
        f.bytes = rerr_base_bytes + 8 * static_cast<int>(lost.size()) + udp_ip_bytes;
        f.rerr = lost;
        broadcast(node, std::move(f), t);
    }

    void handle_rerr(int node, int sender,
                     const std::vector<std::pair<int, std::uint32_t>>& lost, double t) {
        std::vector<std::pair<int, std::uint32_t>> mine;
        for (const auto& [dest, seqno] : lost) {
            AodvEntry* e = find_route(node, dest);
            if (!e || !e->valid || e->next_hop != sender) continue;
            e->valid = false;
            e->dest_seq = seqno;
            e->seq_known = true;
            mine.emplace_back(dest, seqno);
        }
        send_rerr(node, mine, t);
    }

    /// MAC gave up on a unicast: everything routed through that neighbour is
    /// lost. Without local repair, data dies here and RERR tells everyone
    /// upstream; with it, this node parks the data and searches again itself.
    void link_failed(int node, const Frame& f, double t) {
        const int broken = f.dst;
        int stale_hops = 0;
        if (f.kind == FrameKind::data) {
            if (const AodvEntry* e = find_route(node, f.data.dest))
                stale_hops = e->hop_count;
        }
        std::vector<std::pair<int, std::uint32_t>> lost;
        for (auto& [dest, e] : rt[node].routes) { // map order: sorted, deterministic
            if (!e.valid || e.next_hop != broken) continue;
            e.valid = false;
            if (e.seq_known) ++e.dest_seq;
            lost.emplace_back(dest, e.dest_seq);
        }
        if (aodv.local_repair && f.kind == FrameKind::data) {
            repair_route(node, f.data, stale_hops, t);
            return; // hold the bad news unless the repair also fails
        }
        if (f.kind == FrameKind::data) drop(f.data, DropReason::mac_retry_limit);
        send_rerr(node, lost, t);
    }

    /// Buffer a data packet whose next hop just vanished and run a
    /// depth-limited rediscovery from here; only a failed attempt is
    /// escalated into an RERR (see the give-up branch of ev_rreq_round).
    void repair_route(int node, const DataPkt& p, int stale_hops, double t) {
        NodeAodv& a = rt[node];
        auto& buf = a.buffer[p.dest];
        if (static_cast<int>(buf.size()) >= aodv.buffer_limit) {
            drop(p, DropReason::queue_overflow);
        } else {
            buf.push_back(p);
        }
        const int ttl = stale_hops > 0 ? stale_hops + 2 : aodv.net_ttl;
        start_discovery(node, p.dest, t, ttl, /*repair=*/true);
    }

    // --- application ------------------------------------------------------

    void ev_inject(int flow_idx, long long seq, double t) {
        const CbrFlow& fl = flows[flow_idx];
        record_of[{flow_idx, seq}] = out.log.packets.size();
        out.log.packets.push_back({flow_idx, seq, t, false, 0.0, DropReason::none});
        DataPkt p{flow_idx, seq, fl.src, fl.dst, aodv.net_ttl};
        originate(fl.src, p, t);
        const double nxt = fl.start + static_cast<double>(seq + 1) / fl.rate;
        if (nxt < fl.stop && nxt < duration) schedule(nxt, EvKind::inject, flow_idx, 0, 0, seq + 1);
    }

    SimOutput run() {
        for (size_t i = 0; i < flows.size(); ++i)
            if (flows[i].start < flows[i].stop && flows[i].start < duration)
                schedule(flows[i].start, EvKind::inject, static_cast<int>(i));

        while (!queue.empty() && queue.top().t <= duration + 1e-12) {
            const Event ev = queue.top();
            queue.pop();
            now = ev.t;
            switch (ev.kind) {
                case EvKind::inject: ev_inject(ev.node, ev.seq, ev.t); break;
                case EvKind::try_tx: ev_try_tx(ev.node, ev.id, ev.t); break;
                case EvKind::tx_end: ev_tx_end(ev.id, ev.t); break;
                case EvKind::ack_send:
                    ev_ack_send(ev.node, ev.aux, ev.id, ev.t);
                    break;
                case EvKind::ack_timeout:
                    ev_ack_timeout(ev.node, ev.id, ev.aux, ev.t);
                    break;
                case EvKind::rreq_round: ev_rreq_round(ev.node, ev.aux, ev.id, ev.t); break;
                case EvKind::fwd_held: ev_fwd_held(ev.node, ev.id, ev.t); break;
            }
        }

        // packets still waiting for a route never got one; everything else
        // caught mid-transfer ends with the run
        for (const auto& node : rt)
            for (const auto& [dest, pkts] : node.buffer)
                for (const DataPkt& p : pkts) drop(p, DropReason::no_route);
        for (auto& p : out.log.packets)
            if (!p.delivered && p.drop_reason == DropReason::none)
                p.drop_reason = DropReason::end_of_run;

        out.routes.reserve(rt.size());
        for (const auto& node : rt) out.routes.push_back(node.routes);
        return std::move(out);
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Public entry points.
// ---------------------------------------------------------------------------

/// Full run with routing tables and transmission counters exposed.
inline SimOutput simulate_network(const MobilityTrace& trace, const std::vector<CbrFlow>& flows,
                                  const RadioParams& radio, const AodvConfig& aodv,
                                  double duration, std::uint64_t seed) {
    radio.check();
    aodv.check();
    if (!(duration >= 0)) throw Error("netsim: duration must be >= 0");
    if (duration > trace.duration + 1e-9)
        throw Error("netsim: duration exceeds the trace duration");
    const int n = static_cast<int>(trace.nodes.size());
    for (int i = 0; i < n; ++i)
        if (trace.nodes[i].wp.empty())
            throw Error("netsim: trace node " + std::to_string(i) + " has no waypoints");
    for (const auto& f : flows) {
        f.check();
        if (f.src < 0 || f.src >= n || f.dst < 0 || f.dst >= n)
            throw Error("netsim: flow endpoint is not a trace node");
        if (f.payload + detail::udp_ip_bytes > detail::mtu)
            throw Error("netsim: payload exceeds the MTU");
    }
    detail::Sim sim(trace, flows, radio, aodv, duration, seed);
    return sim.run();
}

/// The packet log alone (the common case).
inline PacketLog run_simulation(const MobilityTrace& trace, const std::vector<CbrFlow>& flows,
                                const RadioParams& radio, const AodvConfig& aodv,
                                double duration, std::uint64_t seed) {
    return simulate_network(trace, flows, radio, aodv, duration, seed).log;
}

/// Per-packet outcome table: `flow,seq,send_time,recv_time,delivered,drop_reason`.
inline std::string write_packet_log(const PacketLog& log) {
    std::string out = "flow,seq,send_time,recv_time,delivered,drop_reason\n";
    for (const auto& p : log.packets) {
        out += num_str(p.flow) + "," + num_str(p.seq) + "," + num_str(p.send_time) + ",";
        if (p.delivered) out += num_str(p.recv_time);
        out += ",";
        out += p.delivered ? "1" : "0";
        out += ",";
        out += drop_reason_name(p.drop_reason);
        out += "\n";
    }
    return out;
}

} // namespace vanet
