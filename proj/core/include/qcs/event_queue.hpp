#pragma once

#include <cstdint>
#include <queue>
#include <utility>
#include <vector>

namespace qcs {

/// Deterministic discrete-event queue. Events pop in (time, sequence) order,
/// so simultaneous events keep their insertion order.
template <typename Payload>
class EventQueue {
 public:
  struct Entry {
    double time;
    std::uint64_t seq;
    Payload payload;
  };

  std::uint64_t push(double time, Payload payload) {
    const std::uint64_t seq = next_seq_++;
    heap_.push(Entry{time, seq, std::move(payload)});
    return seq;
  }

  bool empty() const noexcept { return heap_.empty(); }
  std::size_t size() const noexcept { return heap_.size(); }

  Entry pop() {
    Entry e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const noexcept {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace qcs
