#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace repdecay {

using FileId = std::uint32_t;
using ServerId = std::uint32_t;  // 0-based

inline constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

/// One copy of a file: the server holding it and the copy's position inside
/// that server's copy-class list.
struct Holder {
  ServerId server;
  std::uint32_t slot;
};

enum class EventKind : std::uint8_t { Failure, Duplication, Absorbed };

struct EventRecord {
  double time;
  EventKind kind;
  ServerId server;
  FileId file = kNone;      ///< duplicated file, kNone for failures
  ServerId target = kNone;  ///< receiving server, kNone for failures
  std::uint32_t files_lost = 0;
};

/// Full microscopic state of the replicated store.
///
/// For every file the state keeps its replica set; for every server i and
/// copy class k in 1..d it keeps the list of files f with i in replica_set(f)
/// and |replica_set(f)| == k. Both views are updated together by every
/// mutation, so lookups needed by the event loop (minimal nonempty class of a
/// server, uniform choice inside a class, servers with under-replicated
/// files) are O(1) or O(d).
class NetworkState {
 public:
  NetworkState(std::uint32_t n_servers, std::uint32_t d_max);

  std::uint32_t n_servers() const noexcept { return n_servers_; }
  std::uint32_t d_max() const noexcept { return d_max_; }
  double time() const noexcept { return time_; }
  void set_time(double t) noexcept { time_ = t; }

  /// Files ever created, dead ones included.
  std::size_t file_count() const noexcept { return copies_.size(); }
  std::size_t alive_count() const noexcept { return alive_; }

  std::uint32_t copies(FileId f) const { return copies_[f]; }
  std::span<const Holder> holders(FileId f) const {
    return {holders_.data() + static_cast<std::size_t>(f) * d_max_, copies_[f]};
  }
  bool holds(FileId f, ServerId s) const;
  /// Sorted replica set of f; empty for dead files.
  std::vector<ServerId> replica_set(FileId f) const;

  /// Files with exactly k copies, one of them on server s (k in 1..d).
  std::span<const FileId> class_members(ServerId s, std::uint32_t k) const {
    return index_[slot_of(s, k)];
  }
  /// Smallest k with a nonempty class at s, 0 when s holds nothing.
  std::uint32_t min_class(ServerId s) const;

  /// Files network-wide with exactly k copies (k in 1..d).
  std::span<const FileId> files_with_copies(std::uint32_t k) const {
    return global_[k - 1];
  }
  /// Sum over k < d of k * #files with k copies.
  std::size_t under_replicated_copies() const noexcept { return under_copies_; }

  /// Servers holding at least one file with fewer than d copies.
  std::size_t active_server_count() const noexcept { return active_.size(); }
  ServerId active_server(std::size_t idx) const { return active_[idx]; }
  bool is_active(ServerId s) const { return active_pos_[s] != kNone; }

  FileId add_file(std::span<const ServerId> servers);
  /// Removes every copy held by s. Returns the number of files that died.
  std::uint32_t fail_server(ServerId s);
  /// Adds a copy of f on s. Returns false (and changes nothing) if s
  /// already holds f. Requires copies(f) in 1..d-1.
  bool add_copy(FileId f, ServerId s);

  /// Starts maintaining co-location counts for every pair of servers that
  /// hold a common file. Must be called before files are added.
  void enable_pair_tracking();
  bool pair_tracking() const noexcept { return track_pairs_; }
  /// Servers that have, at some point, shared at least two files with a
  /// single other server.
  std::size_t servers_flagged() const noexcept { return flagged_count_; }
  bool flagged(ServerId s) const { return !flagged_.empty() && flagged_[s] != 0; }
  std::uint32_t max_pair_multiplicity_seen() const noexcept { return max_pair_seen_; }

  void enable_event_log() { log_enabled_ = true; }
  bool event_log_enabled() const noexcept { return log_enabled_; }
  void log_event(const EventRecord& r) {
    if (log_enabled_) log_.push_back(r);
  }
  const std::vector<EventRecord>& event_log() const noexcept { return log_; }

  /// Rebuilds every index from the replica sets and throws std::logic_error
  /// on the first mismatch.
  void audit() const;

 private:
  std::size_t slot_of(ServerId s, std::uint32_t k) const {
    return static_cast<std::size_t>(s) * d_max_ + (k - 1);
  }
  Holder* holders_mut(FileId f) {
    return holders_.data() + static_cast<std::size_t>(f) * d_max_;
  }
  void unlink_all(FileId f);
  void link_all(FileId f);
  void bump_under(ServerId s, long delta);
  void pair_add(ServerId a, ServerId b);
  void pair_remove(ServerId a, ServerId b);
  static std::uint64_t pair_key(ServerId a, ServerId b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::uint32_t n_servers_;
  std::uint32_t d_max_;
  double time_ = 0.0;
  std::size_t alive_ = 0;

  std::vector<std::uint32_t> copies_;
  std::vector<Holder> holders_;  // d_max_ slots per file
  std::vector<std::uint32_t> global_pos_;
  std::vector<std::vector<FileId>> global_;  // per class k-1
  std::vector<std::vector<FileId>> index_;   // per (server, class)
  std::vector<std::uint32_t> under_;         // per-server count of copies in classes < d
  std::size_t under_copies_ = 0;
  std::vector<ServerId> active_;
  std::vector<std::uint32_t> active_pos_;

  bool track_pairs_ = false;
  std::unordered_map<std::uint64_t, std::uint32_t> pair_counts_;
  std::vector<std::uint8_t> flagged_;
  std::size_t flagged_count_ = 0;
  std::uint32_t max_pair_seen_ = 0;

  bool log_enabled_ = false;
  std::vector<EventRecord> log_;
};

}  // namespace repdecay
