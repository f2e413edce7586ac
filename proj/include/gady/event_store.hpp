#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gady/tensor.hpp"

namespace gady {

enum class Label : std::uint8_t { Real = 0, Injected = 1, Generated = 2 };

using NodeId = std::int64_t;

/// One timestamped edge event.
struct Interaction {
    NodeId src = 0;
    NodeId dst = 0;
    double time = 0.0;
    std::vector<double> edge_feat;
    Label label = Label::Real;
};

enum class DatasetFormat { UciMsg, BitcoinOtc, EmailDnc, GenericCsv };

inline DatasetFormat parse_format(const std::string& s) {
    if (s == "ucimsg") return DatasetFormat::UciMsg;
    if (s == "bitcoin_otc") return DatasetFormat::BitcoinOtc;
    if (s == "email_dnc") return DatasetFormat::EmailDnc;
    if (s == "generic_csv") return DatasetFormat::GenericCsv;
    throw error("unknown dataset format: " + s);
}

/// Chronologically ordered event log with per-node temporal adjacency.
/// Events are sorted by (time, insertion index); adjacency is undirected:
/// an event appears in both endpoints' lists.
class EventStore {
public:
    struct NeighborRef {
        NodeId peer;
        std::size_t event_index;
        double time;
    };

    EventStore() = default;

    EventStore(std::vector<Interaction> events, NodeId num_nodes)
        : events_(std::move(events)), num_nodes_(num_nodes) {
        for (const Interaction& e : events_) {
            if (e.src < 0 || e.src >= num_nodes_ || e.dst < 0 || e.dst >= num_nodes_)
                throw error("event store: node id out of range");
            if (!events_.empty() && e.edge_feat.size() != events_[0].edge_feat.size())
                throw error("event store: inconsistent edge feature dimension");
        }
        for (std::size_t i = 1; i < events_.size(); ++i)
            if (events_[i].time < events_[i - 1].time)
                throw error("event store: events not sorted by time");
        build_adjacency();
    }

    const std::vector<Interaction>& events() const { return events_; }
    const Interaction& event(std::size_t i) const { return events_[i]; }
    std::size_t num_events() const { return events_.size(); }
    NodeId num_nodes() const { return num_nodes_; }
    std::size_t feat_dim() const { return events_.empty() ? 0 : events_[0].edge_feat.size(); }

    double t_min() const { return events_.empty() ? 0.0 : events_.front().time; }
    double t_max() const { return events_.empty() ? 0.0 : events_.back().time; }

    /// The k most recent events incident to `node` with time strictly before
    /// `t`, most recent first. Fewer when history is short.
    std::vector<NeighborRef> temporal_neighbors(NodeId node, double t, std::size_t k) const {
        if (k == 0) throw error("temporal_neighbors: k must be >= 1");
        std::vector<NeighborRef> out;
        if (node < 0 || node >= num_nodes_) return out;
        const auto& list = adjacency_[node];
        // list is chronological; find first entry with time >= t
        auto it = std::lower_bound(list.begin(), list.end(), t,
                                   [](const NeighborRef& r, double x) { return r.time < x; });
        std::size_t avail = static_cast<std::size_t>(it - list.begin());
        std::size_t take = std::min(k, avail);
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i) out.push_back(list[avail - 1 - i]);
        return out;
    }

    const std::vector<NeighborRef>& adjacency(NodeId node) const { return adjacency_[node]; }

    /// Chronological prefix/suffix split; both sides keep the full node set.
    std::pair<EventStore, EventStore> split(double train_ratio) const {
        if (!(train_ratio > 0.0 && train_ratio < 1.0))
            throw error("split: train_ratio must be in (0,1)");
        std::size_t cut = static_cast<std::size_t>(train_ratio * static_cast<double>(num_events()));
        if (cut == 0 || cut == num_events()) throw error("split: a side would be empty");
        std::vector<Interaction> train(events_.begin(), events_.begin() + cut);
        std::vector<Interaction> test(events_.begin() + cut, events_.end());
        return {EventStore(std::move(train), num_nodes_), EventStore(std::move(test), num_nodes_)};
    }

    struct Batch {
        std::size_t begin;
        std::size_t end;  // half-open
        double t_min;
        double t_max;
    };

    /// Contiguous chronological slices; the last may be short.
    std::vector<Batch> batches(std::size_t batch_size) const {
        if (batch_size == 0) throw error("batches: batch_size must be >= 1");
        std::vector<Batch> out;
        for (std::size_t b = 0; b < num_events(); b += batch_size) {
            std::size_t e = std::min(b + batch_size, num_events());
            out.push_back(Batch{b, e, events_[b].time, events_[e - 1].time});
        }
        return out;
    }

    /// Unordered (u,v) pairs of all events, for injection rejection checks.
    std::vector<std::pair<NodeId, NodeId>> unordered_pairs() const {
        std::vector<std::pair<NodeId, NodeId>> out;
        out.reserve(events_.size());
        for (const Interaction& e : events_) {
            NodeId a = std::min(e.src, e.dst), b = std::max(e.src, e.dst);
            out.emplace_back(a, b);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    void build_adjacency() {
        adjacency_.assign(static_cast<std::size_t>(num_nodes_), {});
        for (std::size_t i = 0; i < events_.size(); ++i) {
            const Interaction& e = events_[i];
            adjacency_[e.src].push_back(NeighborRef{e.dst, i, e.time});
            if (e.dst != e.src) adjacency_[e.dst].push_back(NeighborRef{e.src, i, e.time});
        }
    }

    std::vector<Interaction> events_;
    NodeId num_nodes_ = 0;
    std::vector<std::vector<NeighborRef>> adjacency_;
};

namespace detail {

inline bool comment_or_blank(const std::string& line) {
    for (char c : line) {
        if (c == ' ' || c == '\t' || c == '\r') continue;
        return c == '%' || c == '#';
    }
    return true;  // blank
}

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    if (sep == ' ') {
        while (is >> cur) out.push_back(cur);
    } else {
        while (std::getline(is, cur, sep)) {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            out.push_back(cur);
        }
    }
    return out;
}

inline double parse_num(const std::string& s, std::size_t line_no, const char* what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw error("ingest: line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
}

struct RawRow {
    NodeId src, dst;
    double time;
    std::vector<double> feat;
    Label label = Label::Real;
};

}  // namespace detail

struct IngestOptions {
    bool use_edge_weight = false;  // bitcoin_otc: keep the rating as a feature
};

/// Parse a raw dataset file into an EventStore: rows sorted stably by time,
/// node ids densely remapped by first appearance in chronological order,
/// timestamps shifted so the earliest is 0. Self-loops and repeated pairs
/// are retained.
inline EventStore ingest(const std::string& path, DatasetFormat format,
                         const IngestOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw error("ingest: cannot open " + path);

    std::vector<detail::RawRow> rows;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    bool saw_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (detail::comment_or_blank(line)) continue;
        if (format == DatasetFormat::GenericCsv && !saw_header) {
            header = detail::split_fields(line, ',');
            if (header.size() < 3 || header[0] != "src" || header[1] != "dst" ||
                header[2] != "time")
                throw error("ingest: line " + std::to_string(line_no) +
                            ": generic_csv header must start with src,dst,time");
            saw_header = true;
            continue;
        }
        detail::RawRow row;
        switch (format) {
            case DatasetFormat::UciMsg: {
                auto f = detail::split_fields(line, ' ');
                if (f.size() != 4)
                    throw error("ingest: line " + std::to_string(line_no) +
                                ": expected 'src dst weight timestamp'");
                row.src = static_cast<NodeId>(detail::parse_num(f[0], line_no, "src"));
                row.dst = static_cast<NodeId>(detail::parse_num(f[1], line_no, "dst"));
                row.time = detail::parse_num(f[3], line_no, "timestamp");
                break;
            }
            case DatasetFormat::BitcoinOtc: {
                auto f = detail::split_fields(line, ',');
                if (f.size() != 4)
                    throw error("ingest: line " + std::to_string(line_no) +
                                ": expected 'src,dst,rating,timestamp'");
                row.src = static_cast<NodeId>(detail::parse_num(f[0], line_no, "src"));
                row.dst = static_cast<NodeId>(detail::parse_num(f[1], line_no, "dst"));
                if (opts.use_edge_weight)
                    row.feat.push_back(detail::parse_num(f[2], line_no, "rating"));
                row.time = detail::parse_num(f[3], line_no, "timestamp");
                break;
            }
            case DatasetFormat::EmailDnc: {
                auto f = detail::split_fields(line, ',');
                if (f.size() != 3)
                    throw error("ingest: line " + std::to_string(line_no) +
                                ": expected 'src,dst,timestamp'");
                row.src = static_cast<NodeId>(detail::parse_num(f[0], line_no, "src"));
                row.dst = static_cast<NodeId>(detail::parse_num(f[1], line_no, "dst"));
                row.time = detail::parse_num(f[2], line_no, "timestamp");
                break;
            }
            case DatasetFormat::GenericCsv: {
                auto f = detail::split_fields(line, ',');
                if (f.size() != header.size())
                    throw error("ingest: line " + std::to_string(line_no) +
                                ": column count mismatch");
                row.src = static_cast<NodeId>(detail::parse_num(f[0], line_no, "src"));
                row.dst = static_cast<NodeId>(detail::parse_num(f[1], line_no, "dst"));
                row.time = detail::parse_num(f[2], line_no, "time");
                for (std::size_t c = 3; c < f.size(); ++c) {
                    if (header[c] == "label") {
                        int lv = static_cast<int>(detail::parse_num(f[c], line_no, "label"));
                        row.label = lv == 0 ? Label::Real : Label::Injected;
                    } else {
                        row.feat.push_back(detail::parse_num(f[c], line_no, header[c].c_str()));
                    }
                }
                break;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw error("ingest: " + path + " has no events");

    std::stable_sort(rows.begin(), rows.end(),
                     [](const detail::RawRow& a, const detail::RawRow& b) { return a.time < b.time; });

    // Dense remap in first-appearance order over the sorted stream, which
    // makes ingest(serialize(ingest(x))) produce the identical store.
    std::unordered_map<NodeId, NodeId> remap;
    remap.reserve(rows.size());
    auto dense = [&remap](NodeId raw) {
        auto [it, inserted] = remap.emplace(raw, static_cast<NodeId>(remap.size()));
        return it->second;
    };
    double t0 = rows.front().time;
    std::vector<Interaction> events;
    events.reserve(rows.size());
    for (detail::RawRow& r : rows) {
        Interaction e;
        e.src = dense(r.src);
        e.dst = dense(r.dst);
        e.time = r.time - t0;
        e.edge_feat = std::move(r.feat);
        e.label = r.label;
        events.push_back(std::move(e));
    }
    return EventStore(std::move(events), static_cast<NodeId>(remap.size()));
}

namespace detail {
inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}
}  // namespace detail

/// Canonical serialized form: generic_csv with dense ids and normalized
/// times. `with_labels` appends a 0/1 label column.
inline void write_generic_csv(const EventStore& store, const std::string& path,
                              bool with_labels = false) {
    std::ofstream out(path);
    if (!out) throw error("write: cannot open " + path);
    out << "src,dst,time";
    for (std::size_t i = 0; i < store.feat_dim(); ++i) out << ",f" << i;
    if (with_labels) out << ",label";
    out << "\n";
    for (const Interaction& e : store.events()) {
        out << e.src << ',' << e.dst << ',' << detail::fmt_double(e.time);
        for (double f : e.edge_feat) out << ',' << detail::fmt_double(f);
        if (with_labels) out << ',' << (e.label == Label::Injected ? 1 : 0);
        out << "\n";
    }
}

/// Load a labeled stream without remapping ids or shifting times (they must
/// already match the checkpointed model's node space).
inline EventStore read_labeled_stream(const std::string& path, NodeId num_nodes) {
    std::ifstream in(path);
    if (!in) throw error("read: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    std::vector<Interaction> events;
    bool has_label_col = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::comment_or_blank(line)) continue;
        auto f = detail::split_fields(line, ',');
        if (header.empty()) {
            header = f;
            if (header.size() < 3 || header[0] != "src" || header[1] != "dst" ||
                header[2] != "time")
                throw error("labeled stream: header must start with src,dst,time");
            for (const auto& h : header) has_label_col = has_label_col || h == "label";
            if (!has_label_col) throw error("labeled stream: label column missing");
            continue;
        }
        if (f.size() != header.size())
            throw error("labeled stream: line " + std::to_string(line_no) + ": column mismatch");
        Interaction e;
        e.src = static_cast<NodeId>(detail::parse_num(f[0], line_no, "src"));
        e.dst = static_cast<NodeId>(detail::parse_num(f[1], line_no, "dst"));
        e.time = detail::parse_num(f[2], line_no, "time");
        for (std::size_t c = 3; c < f.size(); ++c) {
            if (header[c] == "label") {
                int lv = static_cast<int>(detail::parse_num(f[c], line_no, "label"));
                e.label = lv == 0 ? Label::Real : Label::Injected;
            } else {
                e.edge_feat.push_back(detail::parse_num(f[c], line_no, header[c].c_str()));
            }
        }
        events.push_back(std::move(e));
    }
    if (events.empty()) throw error("labeled stream: " + path + " has no events");
    return EventStore(std::move(events), num_nodes);
}

}  // namespace gady
