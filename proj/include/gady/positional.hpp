#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>
#include <vector>

#include "gady/event_store.hpp"

namespace gady {

/// Counts of temporal walks r_{j->u}: entry l is the number of walks of
/// length l from j to u over the events seen so far, where a walk uses
/// undirected edges with strictly increasing timestamps (ties never chain).
/// Updated incrementally per event from snapshots taken at the start of the
/// current timestamp group, so an event can neither extend itself nor any
/// other event at the same time.
class PositionalTable {
public:
    using CountVec = std::vector<double>;
    using SourceMap = std::map<NodeId, CountVec>;

    /// depth: maximum walk length tracked (vectors have depth+1 entries).
    /// max_entries: per-target source cap, 0 = unlimited.
    PositionalTable(NodeId num_nodes, std::size_t depth, std::size_t max_entries = 64)
        : depth_(depth), max_entries_(max_entries), targets_(static_cast<std::size_t>(num_nodes)) {}

    std::size_t depth() const { return depth_; }
    NodeId num_nodes() const { return static_cast<NodeId>(targets_.size()); }

    void reset() {
        for (auto& m : targets_) m.clear();
        group_backup_.clear();
        group_time_ = -std::numeric_limits<double>::infinity();
        last_time_ = -std::numeric_limits<double>::infinity();
    }

    /// pre: event times nondecreasing across calls.
    void update_on_event(NodeId u, NodeId v, double t) {
        if (t < last_time_) throw error("positional: events must arrive in nondecreasing time");
        last_time_ = t;
        if (t > group_time_) {
            group_backup_.clear();
            group_time_ = t;
        }
        ensure_base(u);
        ensure_base(v);
        const SourceMap& old_u = snapshot(u);
        const SourceMap& old_v = snapshot(v);

        // r[j->u][l] += r_old[j->v][l-1]; symmetric for v. A self-loop event
        // contributes a single traversal.
        apply(u, old_v);
        if (u != v) apply(v, old_u);

        truncate(u);
        if (u != v) truncate(v);
    }

    /// Walk counts from j to u; all-zero when the pair is absent.
    CountVec query(NodeId j, NodeId u) const {
        CountVec out(depth_ + 1, 0.0);
        if (u < 0 || u >= num_nodes()) return out;
        const SourceMap& m = targets_[u];
        auto it = m.find(j);
        if (it != m.end()) out = it->second;
        return out;
    }

    const SourceMap& sources_of(NodeId u) const { return targets_[u]; }

    void dump_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw error("positional dump: cannot open " + path);
        out << "src,dst";
        for (std::size_t l = 0; l <= depth_; ++l) out << ",len" << l;
        out << "\n";
        for (NodeId u = 0; u < num_nodes(); ++u)
            for (const auto& [j, vec] : targets_[u]) {
                out << j << ',' << u;
                for (double c : vec) out << ',' << c;
                out << "\n";
            }
    }

private:
    void ensure_base(NodeId x) {
        SourceMap& m = targets_[x];
        auto it = m.find(x);
        if (it == m.end()) {
            CountVec base(depth_ + 1, 0.0);
            base[0] = 1.0;
            m.emplace(x, std::move(base));
        }
    }

    // State of target x as of the start of the current timestamp group.
    const SourceMap& snapshot(NodeId x) {
        auto it = group_backup_.find(x);
        if (it == group_backup_.end()) it = group_backup_.emplace(x, targets_[x]).first;
        return it->second;
    }

    void apply(NodeId target, const SourceMap& old_peer) {
        SourceMap& m = targets_[target];
        for (const auto& [j, vec] : old_peer) {
            CountVec* dst = nullptr;
            for (std::size_t l = 1; l <= depth_; ++l) {
                double inc = vec[l - 1];
                if (inc == 0.0) continue;
                if (!dst) {
                    auto [it, ins] = m.try_emplace(j, CountVec(depth_ + 1, 0.0));
                    dst = &it->second;
                }
                (*dst)[l] += inc;
            }
        }
    }

    void truncate(NodeId target) {
        if (max_entries_ == 0) return;
        SourceMap& m = targets_[target];
        if (m.size() <= max_entries_) return;
        // Evict smallest L1 mass first, ties by smaller node id; never the
        // diagonal base entry.
        std::vector<std::pair<double, NodeId>> order;
        order.reserve(m.size());
        for (const auto& [j, vec] : m) {
            if (j == target) continue;
            double mass = 0.0;
            for (double c : vec) mass += c;
            order.emplace_back(mass, j);
        }
        std::sort(order.begin(), order.end());
        std::size_t excess = m.size() - max_entries_;
        for (std::size_t i = 0; i < excess && i < order.size(); ++i) m.erase(order[i].second);
    }

    std::size_t depth_;
    std::size_t max_entries_;
    std::vector<SourceMap> targets_;
    std::unordered_map<NodeId, SourceMap> group_backup_;
    double group_time_ = -std::numeric_limits<double>::infinity();
    double last_time_ = -std::numeric_limits<double>::infinity();
};

/// log(1 + count) elementwise: bounded dynamic range for the encoder.
inline std::vector<double> featurize(const std::vector<double>& counts) {
    std::vector<double> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = std::log1p(counts[i]);
    return out;
}

/// Exhaustive oracle: counts of walks from j to every target, per length,
/// over events with strictly increasing times all < t. Exponential in depth;
/// intended for small inputs only.
inline std::vector<std::vector<double>> brute_force_walks_from(
    const std::vector<Interaction>& events, NodeId j, NodeId num_nodes, std::size_t depth,
    double t) {
    std::vector<std::vector<double>> counts(static_cast<std::size_t>(num_nodes),
                                            std::vector<double>(depth + 1, 0.0));
    if (j < 0 || j >= num_nodes) return counts;
    counts[j][0] = 1.0;

    struct Walker {
        const std::vector<Interaction>& events;
        double t;
        std::size_t depth;
        std::vector<std::vector<double>>& counts;

        void go(NodeId at, double last_time, std::size_t len) {
            if (len == depth) return;
            for (const Interaction& e : events) {
                if (!(e.time < t) || !(e.time > last_time)) continue;
                NodeId next;
                if (e.src == at)
                    next = e.dst;
                else if (e.dst == at)
                    next = e.src;
                else
                    continue;
                counts[next][len + 1] += 1.0;
                go(next, e.time, len + 1);
            }
        }
    };
    Walker w{events, t, depth, counts};
    w.go(j, -std::numeric_limits<double>::infinity(), 0);
    return counts;
}

/// Per-pair oracle wrapper matching the incremental table's query.
inline std::vector<double> brute_force_walks(const std::vector<Interaction>& events, NodeId j,
                                             NodeId u, std::size_t depth, double t,
                                             NodeId num_nodes) {
    auto all = brute_force_walks_from(events, j, num_nodes, depth, t);
    return all[static_cast<std::size_t>(u)];
}

}  // namespace gady
