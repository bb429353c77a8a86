#include "rtsim/mitigation.hpp"

namespace rtsim::mitigation {

std::int64_t BurstPolicy::slice_count(MicroTime t) const {
  return cur_slice_ == t / p_.slice_us ? count_ : 0;
}

bool BurstPolicy::on_packet_received(MicroTime t) {
  const std::int64_t slice = t / p_.slice_us;
  if (slice != cur_slice_) {
    cur_slice_ = slice;
    count_ = 0;
  }
  ++count_;
  if (count_ > p_.capacity) {
    disabled_until_ = (slice + 1) * p_.slice_us;
    return false;  // the packet crossing the capacity is dropped
  }
  return true;
}

void HysteresisPolicy::on_critical_report(MicroTime, MicroTime earliness_us,
                                          MicroTime target_us) {
  const double share = static_cast<double>(earliness_us) / static_cast<double>(target_us);
  if (enabled_) {
    if (share < p_.block_threshold) enabled_ = false;
  } else {
    if (share > p_.unblock_threshold) {
      enabled_ = true;
      wake_driver(p_.poll_sleep_us);
    }
  }
}

void BudgetPolicy::on_critical_report(MicroTime, MicroTime earliness_us, MicroTime) {
  budget_us_ = earliness_us > 0 ? earliness_us : 0;
  if (budget_us_ > 0) wake_driver();
}

std::int64_t BudgetPolicy::consume(MicroTime dt, MicroTime) {
  budget_us_ -= dt;
  if (budget_us_ < 0) budget_us_ = 0;
  return budget_us_;
}

void QueuePolicy::on_enqueue_failed(MicroTime t) {
  if (!enabled_) return;
  enabled_ = false;
  intervals_.push_back({t, -1});
}

void QueuePolicy::on_queue_drained(MicroTime t) {
  if (enabled_) return;
  enabled_ = true;
  if (!intervals_.empty()) intervals_.back().on_at = t;
  wake_driver();
}

}  // namespace rtsim::mitigation
