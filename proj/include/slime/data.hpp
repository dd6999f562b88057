#pragma once

// Data pipeline: interaction-log ingestion, iterative 5-core filtering,
// dense re-indexing, leave-one-out splitting, padding, same-target indexing,
// the synthetic periodic generator, and the binary dataset cache.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "slime/errors.hpp"

namespace slime {

struct Interaction {
    std::string user;
    std::string item;
    long long timestamp = 0;
};

struct InteractionLog {
    std::vector<Interaction> records;
};

struct IngestReport {
    std::size_t total_lines = 0;
    std::size_t parsed = 0;
    std::vector<std::pair<std::size_t, std::string>> bad_lines;  // (line number, reason)
};

namespace data_detail {

inline bool parse_timestamp(const std::string& s, long long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace data_detail

// tsv: user \t item \t timestamp, no header. csv: same columns with a header
// row. Malformed lines are collected; the run aborts unless skip_bad is set.
inline InteractionLog ingest(const std::string& path, const std::string& format,
                             bool skip_bad = false, IngestReport* report_out = nullptr) {
    if (format != "tsv" && format != "csv")
        throw ConfigError("unknown log format '" + format + "' (expected tsv or csv)");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interaction log: " + path);
    const char delim = (format == "tsv") ? '\t' : ',';

    InteractionLog log;
    IngestReport report;
    std::string line;
    std::size_t lineno = 0;
    bool skipped_header = (format != "csv");
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++report.total_lines;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = data_detail::split_fields(line, delim);
        if (fields.size() != 3) {
            report.bad_lines.emplace_back(lineno, "expected 3 fields, got " +
                                                      std::to_string(fields.size()));
            continue;
        }
        long long ts;
        if (!data_detail::parse_timestamp(fields[2], ts)) {
            report.bad_lines.emplace_back(lineno, "non-integer timestamp '" + fields[2] + "'");
            continue;
        }
        if (fields[0].empty() || fields[1].empty()) {
            report.bad_lines.emplace_back(lineno, "empty user or item id");
            continue;
        }
        log.records.push_back({fields[0], fields[1], ts});
        ++report.parsed;
    }
    if (report_out) *report_out = report;
    if (!report.bad_lines.empty() && !skip_bad) {
        std::ostringstream msg;
        msg << report.bad_lines.size() << " malformed line(s) in " << path << "; first at line "
            << report.bad_lines.front().first << ": " << report.bad_lines.front().second;
        throw DataError(msg.str());
    }
    if (log.records.empty()) throw DataError("interaction log is empty: " + path);
    return log;
}

inline InteractionLog filter_min_timestamp(const InteractionLog& log, long long min_timestamp) {
    InteractionLog out;
    for (const auto& r : log.records)
        if (r.timestamp >= min_timestamp) out.records.push_back(r);
    if (out.records.empty()) throw DataError("no records remain after the timestamp filter");
    return out;
}

// Iteratively drop users and items with fewer than 5 interactions until both
// minimum-degree constraints hold.
inline InteractionLog five_core_filter(const InteractionLog& log, std::size_t core = 5) {
    std::vector<Interaction> records = log.records;
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, std::size_t> user_count, item_count;
        for (const auto& r : records) {
            ++user_count[r.user];
            ++item_count[r.item];
        }
        std::vector<Interaction> kept;
        kept.reserve(records.size());
        for (const auto& r : records) {
            if (user_count[r.user] >= core && item_count[r.item] >= core)
                kept.push_back(r);
            else
                changed = true;
        }
        records.swap(kept);
    }
    if (records.empty()) throw DataError("5-core filtering removed every record");
    return InteractionLog{std::move(records)};
}

// ---------------------------------------------------------------------------

struct SequenceDataset {
    std::vector<std::string> user_ids;  // dense user index -> original id
    std::vector<std::string> item_ids;  // dense item index -> original id; [0] is padding
    std::unordered_map<std::string, int> user_index;
    std::unordered_map<std::string, int> item_index;
    std::vector<std::vector<int>> sequences;  // chronological per user, dense item indices

    std::size_t num_users() const { return user_ids.size(); }
    std::size_t num_items() const { return item_ids.size(); }  // includes padding slot
};

// Dense re-indexing with chronological per-user ordering; timestamp ties keep
// input order (stable sort).
inline SequenceDataset build_dataset(const InteractionLog& log) {
    if (log.records.empty()) throw DataError("cannot build a dataset from an empty log");
    SequenceDataset ds;
    ds.item_ids.push_back("<pad>");
    std::vector<std::vector<std::pair<long long, int>>> per_user;  // (timestamp, item index)
    for (const auto& r : log.records) {
        auto [uit, unew] = ds.user_index.try_emplace(r.user, static_cast<int>(ds.user_ids.size()));
        if (unew) {
            ds.user_ids.push_back(r.user);
            per_user.emplace_back();
        }
        auto [iit, inew] = ds.item_index.try_emplace(r.item, static_cast<int>(ds.item_ids.size()));
        if (inew) ds.item_ids.push_back(r.item);
        per_user[static_cast<std::size_t>(uit->second)].emplace_back(r.timestamp, iit->second);
    }
    ds.sequences.resize(per_user.size());
    for (std::size_t u = 0; u < per_user.size(); ++u) {
        std::stable_sort(per_user[u].begin(), per_user[u].end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (const auto& [ts, item] : per_user[u]) ds.sequences[u].push_back(item);
    }
    return ds;
}

struct DatasetStats {
    std::size_t users = 0;
    std::size_t items = 0;  // real items, padding excluded
    std::size_t actions = 0;
    double avg_length = 0.0;
    double sparsity = 0.0;  // 1 - actions / (users * items)
};

inline DatasetStats dataset_stats(const SequenceDataset& ds) {
    DatasetStats s;
    s.users = ds.num_users();
    s.items = ds.num_items() - 1;
    for (const auto& seq : ds.sequences) s.actions += seq.size();
    if (s.users) s.avg_length = static_cast<double>(s.actions) / static_cast<double>(s.users);
    if (s.users && s.items)
        s.sparsity = 1.0 - static_cast<double>(s.actions) /
                               (static_cast<double>(s.users) * static_cast<double>(s.items));
    return s;
}

// ---------------------------------------------------------------------------
// Leave-one-out split: test target = last item, validation target =
// second-to-last, train = the remaining prefix.

struct SplitExample {
    long user = -1;
    std::vector<int> input;  // unpadded chronological prefix
    int target = 0;
};

struct Splits {
    std::vector<SplitExample> train;  // one example per user: predict the prefix's last item
    std::vector<std::vector<int>> train_prefix;  // full train-portion sequence per kept user
    std::vector<SplitExample> valid;
    std::vector<SplitExample> test;
    std::vector<long> skipped_users;  // sequences shorter than 3
};

inline Splits split_leave_one_out(const SequenceDataset& ds) {
    Splits sp;
    for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
        const auto& seq = ds.sequences[u];
        if (seq.size() < 3) {
            sp.skipped_users.push_back(static_cast<long>(u));
            continue;
        }
        const std::size_t n = seq.size();
        std::vector<int> train_prefix(seq.begin(), seq.end() - 2);
        SplitExample tr;
        tr.user = static_cast<long>(u);
        tr.input.assign(train_prefix.begin(), train_prefix.end() - 1);
        tr.target = train_prefix.back();
        sp.train.push_back(std::move(tr));
        sp.train_prefix.push_back(train_prefix);

        SplitExample va;
        va.user = static_cast<long>(u);
        va.input = train_prefix;
        va.target = seq[n - 2];
        sp.valid.push_back(std::move(va));

        SplitExample te;
        te.user = static_cast<long>(u);
        te.input.assign(seq.begin(), seq.end() - 1);
        te.target = seq[n - 1];
        sp.test.push_back(std::move(te));
    }
    if (sp.train.empty()) throw DataError("no user has the 3 interactions a split requires");
    return sp;
}

// Keep the most recent min(len, n) items, left-padded with the 0 item.
inline std::vector<int> pad_truncate(const std::vector<int>& seq, std::size_t n) {
    if (n < 1) throw ConfigError("pad_truncate needs n >= 1");
    std::vector<int> out(n, 0);
    const std::size_t keep = std::min(seq.size(), n);
    for (std::size_t i = 0; i < keep; ++i) out[n - keep + i] = seq[seq.size() - keep + i];
    return out;
}

// target item -> indices into the training example list.
inline std::unordered_map<int, std::vector<long>> build_target_index(
    const std::vector<SplitExample>& train) {
    std::unordered_map<int, std::vector<long>> index;
    for (std::size_t i = 0; i < train.size(); ++i)
        index[train[i].target].push_back(static_cast<long>(i));
    return index;
}

// ---------------------------------------------------------------------------
// Synthetic periodic interactions. Items are partitioned into one pool per
// period; each user draws a two-item cycle from every pool and the cycles fire
// at multiples of their periods (merged chronologically, longer period first
// on ties). A noise_rate fraction of emissions is replaced with uniform random
// items. The clean (pre-noise) sequences are returned for oracle checks.

struct SynthResult {
    InteractionLog log;
    std::vector<std::vector<int>> clean;  // per user, 1-based generated item numbers
};

inline SynthResult synth_periodic(std::size_t users, std::size_t items,
                                  std::vector<std::size_t> periods, double noise_rate,
                                  std::uint64_t seed, std::size_t horizon = 64,
                                  std::size_t cycle_len = 2) {
    if (users == 0 || items == 0) throw ConfigError("synthetic generator needs users and items");
    if (periods.empty()) throw ConfigError("synthetic generator needs at least one period");
    for (std::size_t p : periods)
        if (p < 2) throw ConfigError("every period must be >= 2");
    if (noise_rate < 0.0 || noise_rate > 1.0) throw ConfigError("noise_rate must lie in [0, 1]");
    if (cycle_len < 2) throw ConfigError("cycle length must be >= 2");
    const std::size_t pool_size = items / periods.size();
    if (pool_size < cycle_len)
        throw ConfigError("item pools too small: " + std::to_string(items) + " items over " +
                          std::to_string(periods.size()) + " periods for cycles of " +
                          std::to_string(cycle_len));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_item(1, items);

    SynthResult out;
    out.clean.resize(users);
    for (std::size_t u = 0; u < users; ++u) {
        // one cycle of distinct items per period, drawn from that period's pool
        std::vector<std::vector<std::size_t>> cycles(periods.size());
        for (std::size_t pi = 0; pi < periods.size(); ++pi) {
            const std::size_t base = pi * pool_size;  // pool = [base, base + pool_size)
            std::vector<std::size_t> pool(pool_size);
            for (std::size_t k = 0; k < pool_size; ++k) pool[k] = base + k + 1;  // 1-based
            std::shuffle(pool.begin(), pool.end(), rng);
            cycles[pi].assign(pool.begin(), pool.begin() + static_cast<long>(cycle_len));
        }
        // merge the periodic firings chronologically; ties fire longer period first
        std::vector<std::pair<std::size_t, std::size_t>> events;  // (time, period index)
        for (std::size_t pi = 0; pi < periods.size(); ++pi)
            for (std::size_t t = periods[pi]; t <= horizon; t += periods[pi])
                events.emplace_back(t, pi);
        std::sort(events.begin(), events.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return periods[a.second] > periods[b.second];
        });
        std::vector<std::size_t> fire_count(periods.size(), 0);
        for (const auto& [t, pi] : events) {
            std::size_t clean_item = cycles[pi][fire_count[pi] % cycle_len];
            ++fire_count[pi];
            out.clean[u].push_back(static_cast<int>(clean_item));
            std::size_t emitted = clean_item;
            if (noise_rate > 0.0 && coin(rng) < noise_rate) emitted = any_item(rng);
            out.log.records.push_back({"u" + std::to_string(u), "i" + std::to_string(emitted),
                                       static_cast<long long>(t)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary dataset cache: versioned header plus a content hash of the raw input
// and preparation config, so stale caches are detected.

inline std::uint64_t fnv1a_hash(const std::string& bytes, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t file_content_hash(const std::string& path, const std::string& config_tag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash missing file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a_hash(config_tag, fnv1a_hash(buf.str()));
}

namespace cache_detail {

constexpr char kMagic[8] = {'S', 'L', 'I', 'M', 'E', 'D', 'S', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    std::string s(read_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

}  // namespace cache_detail

inline void save_dataset_cache(const std::string& path, const SequenceDataset& ds,
                               std::uint64_t content_hash) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open dataset cache for writing: " + path);
    out.write(cache_detail::kMagic, 8);
    cache_detail::write_u64(out, 1);  // format version
    cache_detail::write_u64(out, content_hash);
    cache_detail::write_u64(out, ds.user_ids.size());
    for (const auto& s : ds.user_ids) cache_detail::write_string(out, s);
    cache_detail::write_u64(out, ds.item_ids.size());
    for (const auto& s : ds.item_ids) cache_detail::write_string(out, s);
    cache_detail::write_u64(out, ds.sequences.size());
    for (const auto& seq : ds.sequences) {
        cache_detail::write_u64(out, seq.size());
        for (int item : seq) cache_detail::write_u64(out, static_cast<std::uint64_t>(item));
    }
    if (!out) throw IoError("failed writing dataset cache: " + path);
}

// Reads a cache file regardless of its stored hash; returns false when the
// file is missing, throws on structural corruption.
inline bool read_dataset_cache(const std::string& path, SequenceDataset& ds,
                               std::uint64_t& stored_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, cache_detail::kMagic, 8) != 0)
        throw DataError("not a dataset cache file: " + path);
    if (cache_detail::read_u64(in) != 1)
        throw DataError("unsupported dataset cache version in " + path);
    stored_hash = cache_detail::read_u64(in);
    ds = SequenceDataset{};
    std::uint64_t nu = cache_detail::read_u64(in);
    for (std::uint64_t i = 0; i < nu; ++i) ds.user_ids.push_back(cache_detail::read_string(in));
    std::uint64_t ni = cache_detail::read_u64(in);
    for (std::uint64_t i = 0; i < ni; ++i) ds.item_ids.push_back(cache_detail::read_string(in));
    std::uint64_t ns = cache_detail::read_u64(in);
    for (std::uint64_t i = 0; i < ns; ++i) {
        std::uint64_t len = cache_detail::read_u64(in);
        std::vector<int> seq(len);
        for (auto& item : seq) item = static_cast<int>(cache_detail::read_u64(in));
        ds.sequences.push_back(std::move(seq));
    }
    if (!in) throw DataError("truncated dataset cache: " + path);
    for (std::size_t u = 0; u < ds.user_ids.size(); ++u)
        ds.user_index[ds.user_ids[u]] = static_cast<int>(u);
    for (std::size_t i = 0; i < ds.item_ids.size(); ++i)
        ds.item_index[ds.item_ids[i]] = static_cast<int>(i);
    return true;
}

// Returns false when the file is missing or carries a different content hash
// (stale cache).
inline bool load_dataset_cache(const std::string& path, std::uint64_t expected_hash,
                               SequenceDataset& ds) {
    std::uint64_t stored = 0;
    if (!read_dataset_cache(path, ds, stored)) return false;
    return stored == expected_hash;
}

}  // namespace slime
