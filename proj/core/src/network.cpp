#include "repdecay/network.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace repdecay {

namespace {

[[noreturn]] void audit_fail(const std::string& what) {
  throw std::logic_error("network audit failed: " + what);
}

}  // namespace

NetworkState::NetworkState(std::uint32_t n_servers, std::uint32_t d_max)
    : n_servers_(n_servers),
      d_max_(d_max),
      global_(d_max),
      index_(static_cast<std::size_t>(n_servers) * d_max),
      under_(n_servers, 0),
      active_pos_(n_servers, kNone) {
  if (n_servers == 0 || d_max == 0) {
    throw std::invalid_argument("NetworkState needs n_servers > 0 and d_max > 0");
  }
}

bool NetworkState::holds(FileId f, ServerId s) const {
  for (const Holder& h : holders(f)) {
    if (h.server == s) return true;
  }
  return false;
}

std::vector<ServerId> NetworkState::replica_set(FileId f) const {
  std::vector<ServerId> out;
  out.reserve(copies_[f]);
  for (const Holder& h : holders(f)) out.push_back(h.server);
  std::sort(out.begin(), out.end());
  return out;
}

std::uint32_t NetworkState::min_class(ServerId s) const {
  for (std::uint32_t k = 1; k <= d_max_; ++k) {
    if (!index_[slot_of(s, k)].empty()) return k;
  }
  return 0;
}

void NetworkState::bump_under(ServerId s, long delta) {
  const std::uint32_t before = under_[s];
  under_[s] = static_cast<std::uint32_t>(static_cast<long>(before) + delta);
  if (before == 0 && under_[s] > 0) {
    active_pos_[s] = static_cast<std::uint32_t>(active_.size());
    active_.push_back(s);
  } else if (before > 0 && under_[s] == 0) {
    const std::uint32_t pos = active_pos_[s];
    const ServerId moved = active_.back();
    active_[pos] = moved;
    active_pos_[moved] = pos;
    active_.pop_back();
    active_pos_[s] = kNone;
  }
}

void NetworkState::unlink_all(FileId f) {
  const std::uint32_t k = copies_[f];
  if (k == 0) return;
  Holder* hs = holders_mut(f);
  for (std::uint32_t h = 0; h < k; ++h) {
    auto& list = index_[slot_of(hs[h].server, k)];
    const FileId moved = list.back();
    list[hs[h].slot] = moved;
    list.pop_back();
    if (moved != f) {
      Holder* mh = holders_mut(moved);
      for (std::uint32_t j = 0; j < copies_[moved]; ++j) {
        if (mh[j].server == hs[h].server) {
          mh[j].slot = hs[h].slot;
          break;
        }
      }
    }
  }
  auto& glist = global_[k - 1];
  const FileId gmoved = glist.back();
  glist[global_pos_[f]] = gmoved;
  global_pos_[gmoved] = global_pos_[f];
  glist.pop_back();
  global_pos_[f] = kNone;
  if (k < d_max_) {
    for (std::uint32_t h = 0; h < k; ++h) bump_under(hs[h].server, -1);
    under_copies_ -= k;
  }
}

void NetworkState::link_all(FileId f) {
  const std::uint32_t k = copies_[f];
  if (k == 0) return;
  Holder* hs = holders_mut(f);
  for (std::uint32_t h = 0; h < k; ++h) {
    auto& list = index_[slot_of(hs[h].server, k)];
    hs[h].slot = static_cast<std::uint32_t>(list.size());
    list.push_back(f);
  }
  global_pos_[f] = static_cast<std::uint32_t>(global_[k - 1].size());
  global_[k - 1].push_back(f);
  if (k < d_max_) {
    for (std::uint32_t h = 0; h < k; ++h) bump_under(hs[h].server, +1);
    under_copies_ += k;
  }
}

FileId NetworkState::add_file(std::span<const ServerId> servers) {
  if (servers.empty() || servers.size() > d_max_) {
    throw std::invalid_argument("add_file: replica count must be in 1..d_max");
  }
  for (std::size_t a = 0; a < servers.size(); ++a) {
    if (servers[a] >= n_servers_) throw std::invalid_argument("add_file: server out of range");
    for (std::size_t b = 0; b < a; ++b) {
      if (servers[a] == servers[b]) throw std::invalid_argument("add_file: duplicate server");
    }
  }
  const auto f = static_cast<FileId>(copies_.size());
  copies_.push_back(static_cast<std::uint32_t>(servers.size()));
  holders_.resize(holders_.size() + d_max_, Holder{kNone, kNone});
  global_pos_.push_back(kNone);
  Holder* hs = holders_mut(f);
  for (std::size_t a = 0; a < servers.size(); ++a) hs[a] = Holder{servers[a], kNone};
  if (track_pairs_) {
    for (std::size_t a = 0; a < servers.size(); ++a) {
      for (std::size_t b = 0; b < a; ++b) pair_add(servers[a], servers[b]);
    }
  }
  link_all(f);
  ++alive_;
  return f;
}

std::uint32_t NetworkState::fail_server(ServerId s) {
  std::uint32_t lost = 0;
  for (std::uint32_t k = 1; k <= d_max_; ++k) {
    auto& list = index_[slot_of(s, k)];
    while (!list.empty()) {
      const FileId f = list.back();
      unlink_all(f);
      Holder* hs = holders_mut(f);
      std::uint32_t idx = 0;
      while (hs[idx].server != s) ++idx;
      hs[idx] = hs[k - 1];
      hs[k - 1] = Holder{kNone, kNone};
      copies_[f] = k - 1;
      if (track_pairs_) {
        for (std::uint32_t j = 0; j + 1 < k; ++j) pair_remove(s, hs[j].server);
      }
      if (k == 1) {
        --alive_;
        ++lost;
      } else {
        link_all(f);
      }
    }
  }
  return lost;
}

bool NetworkState::add_copy(FileId f, ServerId s) {
  if (holds(f, s)) return false;
  const std::uint32_t k = copies_[f];
  if (k == 0 || k >= d_max_) {
    throw std::logic_error("add_copy: file must be alive and under-replicated");
  }
  unlink_all(f);
  Holder* hs = holders_mut(f);
  if (track_pairs_) {
    for (std::uint32_t j = 0; j < k; ++j) pair_add(s, hs[j].server);
  }
  hs[k] = Holder{s, kNone};
  copies_[f] = k + 1;
  link_all(f);
  return true;
}

void NetworkState::enable_pair_tracking() {
  if (!copies_.empty()) {
    throw std::logic_error("enable_pair_tracking must precede add_file");
  }
  track_pairs_ = true;
  flagged_.assign(n_servers_, 0);
}

void NetworkState::pair_add(ServerId a, ServerId b) {
  const std::uint32_t c = ++pair_counts_[pair_key(a, b)];
  max_pair_seen_ = std::max(max_pair_seen_, c);
  if (c >= 2) {
    for (ServerId s : {a, b}) {
      if (!flagged_[s]) {
        flagged_[s] = 1;
        ++flagged_count_;
      }
    }
  }
}

void NetworkState::pair_remove(ServerId a, ServerId b) {
  auto it = pair_counts_.find(pair_key(a, b));
  if (it == pair_counts_.end()) throw std::logic_error("pair_remove: unknown pair");
  if (--it->second == 0) pair_counts_.erase(it);
}

void NetworkState::audit() const {
  std::size_t alive = 0;
  std::size_t total_copies = 0;
  std::vector<std::uint32_t> under(n_servers_, 0);
  std::size_t under_copies = 0;
  std::unordered_map<std::uint64_t, std::uint32_t> pairs;
  for (FileId f = 0; f < copies_.size(); ++f) {
    const std::uint32_t k = copies_[f];
    if (k > d_max_) audit_fail("file " + std::to_string(f) + " exceeds d_max copies");
    if (k == 0) {
      if (global_pos_[f] != kNone) audit_fail("dead file still indexed");
      continue;
    }
    ++alive;
    total_copies += k;
    const auto hs = holders(f);
    for (std::uint32_t a = 0; a < k; ++a) {
      const Holder& h = hs[a];
      if (h.server >= n_servers_) audit_fail("holder out of range");
      for (std::uint32_t b = 0; b < a; ++b) {
        if (hs[b].server == h.server) audit_fail("duplicate holder");
        if (track_pairs_) ++pairs[pair_key(h.server, hs[b].server)];
      }
      const auto& list = index_[slot_of(h.server, k)];
      if (h.slot >= list.size() || list[h.slot] != f) {
        audit_fail("index slot mismatch for file " + std::to_string(f));
      }
      if (k < d_max_) ++under[h.server];
    }
    if (k < d_max_) under_copies += k;
    const auto& glist = global_[k - 1];
    if (global_pos_[f] >= glist.size() || glist[global_pos_[f]] != f) {
      audit_fail("global class mismatch for file " + std::to_string(f));
    }
  }
  if (alive != alive_) audit_fail("alive count mismatch");

  std::size_t indexed = 0;
  double weighted = 0.0;
  for (ServerId s = 0; s < n_servers_; ++s) {
    for (std::uint32_t k = 1; k <= d_max_; ++k) {
      const std::size_t n = index_[slot_of(s, k)].size();
      indexed += n;
      weighted += static_cast<double>(n) / k;
    }
  }
  if (indexed != total_copies) audit_fail("per-server index holds stale entries");
  if (static_cast<std::size_t>(weighted + 0.5) != alive_) {
    audit_fail("sum of class sizes over k does not match alive count");
  }
  std::size_t global_total = 0;
  for (const auto& g : global_) global_total += g.size();
  if (global_total != alive_) audit_fail("global class lists hold stale entries");

  if (under != under_) audit_fail("under-replication counts mismatch");
  if (under_copies != under_copies_) audit_fail("under-replicated copy total mismatch");
  std::size_t active = 0;
  for (ServerId s = 0; s < n_servers_; ++s) {
    const bool want = under[s] > 0;
    if (want != (active_pos_[s] != kNone)) audit_fail("active set mismatch");
    if (want) {
      ++active;
      if (active_[active_pos_[s]] != s) audit_fail("active position mismatch");
    }
  }
  if (active != active_.size()) audit_fail("active list size mismatch");
  if (track_pairs_ && pairs != pair_counts_) audit_fail("pair counts mismatch");
}

}  // namespace repdecay
