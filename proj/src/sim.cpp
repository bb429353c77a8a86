#include "rtsim/sim.hpp"

#include <stdexcept>

namespace rtsim {

EventId Simulation::schedule(MicroTime fire_at, EventKind kind, std::function<void()> fn) {
  if (fire_at < now_)
    throw std::logic_error("Simulation::schedule: fire_at " + std::to_string(fire_at) +
                           " is before now " + std::to_string(now_));
  const std::uint64_t id = ++next_id_;
  heap_.push(Entry{fire_at, next_seq_++, id});
  pending_.emplace(id, Pending{kind, std::move(fn)});
  return EventId{id};
}

bool Simulation::cancel(EventId id) {
  // The heap entry stays behind as a tombstone and is skipped on pop.
  return pending_.erase(id.value) > 0;
}

void Simulation::run_until(MicroTime t_end) {
  while (!heap_.empty()) {
    const Entry top = heap_.top();
    if (top.fire_at > t_end) break;
    heap_.pop();
    auto it = pending_.find(top.id);
    if (it == pending_.end()) continue;  // cancelled
    std::function<void()> fn = std::move(it->second.fn);
    pending_.erase(it);
    now_ = top.fire_at;
    fn();
  }
  now_ = t_end;
}

RngStream& Simulation::rng(const std::string& name) {
  auto it = streams_.find(name);
  if (it == streams_.end())
    it = streams_.emplace(name, RngStream(seed_, name)).first;
  return it->second;
}

}  // namespace rtsim
