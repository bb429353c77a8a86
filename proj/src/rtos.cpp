#include "rtsim/rtos.hpp"

#include <cmath>
#include <stdexcept>

namespace rtsim::rtos {

Cpu::Cpu(Simulation& sim, MicroTime quantum_us, MicroTime context_switch_us)
    : sim_(sim), quantum_us_(quantum_us), context_switch_us_(context_switch_us) {
  if (quantum_us_ <= 0) throw std::invalid_argument("Cpu: quantum must be > 0");
}

TaskId Cpu::add_task(TaskSpec spec, std::unique_ptr<TaskBody> body) {
  if (started_) throw std::logic_error("Cpu: add_task after start");
  if (spec.kind == TaskKind::PeriodicCritical) {
    if (spec.period_us <= 0) throw std::invalid_argument("periodic task needs a period");
    if (spec.deadline_us == 0) spec.deadline_us = spec.period_us;
    if (spec.deadline_us > spec.period_us)
      throw std::invalid_argument("periodic task deadline must be <= period");
  }
  Task t;
  t.spec = std::move(spec);
  t.body = std::move(body);
  tasks_.push_back(std::move(t));
  return static_cast<TaskId>(tasks_.size() - 1);
}

void Cpu::start() {
  started_ = true;
  for (TaskId id = 0; id < static_cast<TaskId>(tasks_.size()); ++id) {
    Task& t = tasks_[id];
    if (t.spec.kind == TaskKind::PeriodicCritical && !t.body) {
      sim_.schedule(sim_.now(), EventKind::TaskRelease, [this, id] { release_periodic(id); });
    } else if (t.spec.kind == TaskKind::Busy) {
      wake(id);
    }
  }
  reschedule();
}

void Cpu::make_ready(TaskId id, bool front) {
  Task& t = tasks_[id];
  t.state = State::Ready;
  auto& q = ready_[t.spec.priority];
  if (front)
    q.push_front(id);
  else
    q.push_back(id);
}

void Cpu::remove_ready(TaskId id) {
  auto it = ready_.find(tasks_[id].spec.priority);
  if (it == ready_.end()) return;
  auto& q = it->second;
  for (auto qi = q.begin(); qi != q.end(); ++qi) {
    if (*qi == id) {
      q.erase(qi);
      break;
    }
  }
  if (q.empty()) ready_.erase(it);
}

TaskId Cpu::pick_running() const {
  for (const auto& [prio, q] : ready_)
    if (!q.empty()) return q.front();
  return kIdle;
}

MicroTime Cpu::charge(Task& t, double cost_us) {
  const double total = cost_us + t.cost_carry;
  const double whole = std::floor(total);
  t.cost_carry = total - whole;
  return static_cast<MicroTime>(whole);
}

void Cpu::record_segment(CpuTrace::SegKind kind, TaskId task, MicroTime start, MicroTime end) {
  if (trace_ && end > start) trace_->segments.push_back({kind, task, start, end});
}

void Cpu::preempt_running(MicroTime now) {
  if (running_ == kIdle) return;
  Task& t = tasks_[running_];
  if (completion_pending_) {
    sim_.cancel(completion_);
    completion_pending_ = false;
  }
  if (quantum_pending_) {
    sim_.cancel(quantum_);
    quantum_pending_ = false;
  }
  MicroTime elapsed = now - seg_start_;
  const MicroTime sw = std::min(elapsed, switch_part_);
  switch_time_ += sw;
  record_segment(CpuTrace::SegKind::Switch, running_, seg_start_, seg_start_ + sw);
  elapsed -= sw;
  t.burst_left -= elapsed;
  t.cpu_used += elapsed;
  record_segment(CpuTrace::SegKind::Task, running_, seg_start_ + sw, now);
  // A preempted task keeps its turn at the head of its priority queue.
  make_ready(running_, /*front=*/true);
  running_ = kIdle;
}

void Cpu::arm_quantum(TaskId id) {
  if (quantum_pending_) return;
  quantum_ = sim_.schedule(sim_.now() + quantum_us_, EventKind::TaskRelease, [this, id] {
    quantum_pending_ = false;
    if (running_ != id) return;
    auto rit = ready_.find(tasks_[id].spec.priority);
    if (rit == ready_.end() || rit->second.empty()) return;
    preempt_running(sim_.now());
    // Rotation: move from the front (where preempt put it) to the back.
    remove_ready(id);
    make_ready(id, /*front=*/false);
    reschedule();
  });
  quantum_pending_ = true;
}

void Cpu::dispatch(TaskId id) {
  const MicroTime now = sim_.now();
  Task& t = tasks_[id];
  remove_ready(id);
  t.state = State::Running;
  running_ = id;
  seg_start_ = now;
  switch_part_ = context_switch_us_;
  completion_ = sim_.schedule(now + switch_part_ + t.burst_left, EventKind::TaskRelease,
                              [this] { finish_burst(); });
  completion_pending_ = true;

  auto it = ready_.find(t.spec.priority);
  if (it != ready_.end() && !it->second.empty()) arm_quantum(id);
}

void Cpu::finish_burst() {
  completion_pending_ = false;
  if (quantum_pending_) {
    sim_.cancel(quantum_);
    quantum_pending_ = false;
  }
  const MicroTime now = sim_.now();
  const TaskId id = running_;
  Task& t = tasks_[id];
  switch_time_ += switch_part_;
  record_segment(CpuTrace::SegKind::Switch, id, seg_start_, seg_start_ + switch_part_);
  t.cpu_used += t.burst_left;
  record_segment(CpuTrace::SegKind::Task, id, seg_start_ + switch_part_, now);
  t.burst_left = 0;
  t.has_burst = false;
  running_ = kIdle;

  if (t.spec.kind == TaskKind::PeriodicCritical && !t.body) {
    CycleRecord rec{id, t.cur_release, now, t.cur_deadline};
    cycles_.push_back(rec);
    t.state = State::Blocked;
    // An overrunning cycle starts the next period immediately; otherwise the
    // task sleeps until its nominal release.
    const MicroTime next = std::max(t.cur_release + t.spec.period_us, now);
    sim_.schedule(next, EventKind::TaskRelease, [this, id] { release_periodic(id); });
    if (on_cycle) on_cycle(rec, t.cur_deadline - now);
  } else {
    make_ready(id, /*front=*/false);
    if (t.body) {
      // Wakes and priority changes from the callback are deferred to the
      // reschedule below; re-entering the body mid-completion is not allowed.
      resched_active_ = true;
      t.body->on_burst_done(now);
      resched_active_ = false;
    }
  }
  reschedule();
}

void Cpu::release_periodic(TaskId id) {
  Task& t = tasks_[id];
  t.cur_release = sim_.now();
  t.cur_deadline = t.cur_release + t.spec.deadline_us;
  t.burst_left = t.spec.work_us;
  t.has_burst = true;
  if (t.state == State::Blocked) make_ready(id, /*front=*/false);
  reschedule();
}

void Cpu::wake(TaskId id) {
  Task& t = tasks_[id];
  if (t.state != State::Blocked) return;
  make_ready(id, /*front=*/false);
  reschedule();
}

void Cpu::set_priority(TaskId id, int priority) {
  Task& t = tasks_[id];
  if (t.spec.priority == priority) return;
  if (t.state == State::Ready) {
    remove_ready(id);
    t.spec.priority = priority;
    make_ready(id, /*front=*/false);
  } else {
    t.spec.priority = priority;
  }
  reschedule();
}

void Cpu::request_isr(std::function<IsrAction()> begin) {
  isr_queue_.push_back(std::move(begin));
  if (!isr_active_) begin_next_isr();
}

void Cpu::request_isr(double cost_us, std::function<void()> effect) {
  request_isr([cost_us, effect = std::move(effect)]() mutable {
    return IsrAction{cost_us, std::move(effect)};
  });
}

void Cpu::begin_next_isr() {
  isr_active_ = true;
  preempt_running(sim_.now());
  auto begin = std::move(isr_queue_.front());
  isr_queue_.pop_front();
  IsrAction action = begin();
  const double total = action.cost_us + isr_carry_;
  const double whole = std::floor(total);
  isr_carry_ = total - whole;
  isr_start_ = sim_.now();
  isr_effect_ = std::move(action.effect);
  sim_.schedule(isr_start_ + static_cast<MicroTime>(whole), EventKind::Irq,
                [this] { finish_isr(); });
}

void Cpu::finish_isr() {
  const MicroTime now = sim_.now();
  isr_time_ += now - isr_start_;
  record_segment(CpuTrace::SegKind::Isr, kIdle, isr_start_, now);
  auto effect = std::move(isr_effect_);
  isr_effect_ = nullptr;
  if (effect) effect();
  if (!isr_queue_.empty()) {
    begin_next_isr();
  } else {
    isr_active_ = false;
    reschedule();
  }
}

void Cpu::reschedule() {
  if (!started_ || isr_active_) return;
  if (resched_active_) {
    resched_requested_ = true;
    return;
  }
  resched_active_ = true;
  do {
    resched_requested_ = false;
    reschedule_loop();
  } while (resched_requested_);
  resched_active_ = false;
}

void Cpu::reschedule_loop() {
  for (;;) {
    const TaskId pick = pick_running();
    if (running_ != kIdle) {
      if (pick == kIdle) return;
      const int rp = tasks_[running_].spec.priority;
      const int pp = tasks_[pick].spec.priority;
      if (pp < rp) return;
      if (pp == rp) {
        arm_quantum(running_);  // a peer appeared mid-burst: rotate after a quantum
        return;
      }
      preempt_running(sim_.now());
      continue;
    }
    if (pick == kIdle) return;
    Task& t = tasks_[pick];
    if (!t.has_burst) {
      if (!t.body) {
        remove_ready(pick);
        t.state = State::Blocked;
        continue;
      }
      const auto burst = t.body->next_burst(sim_.now());
      if (!burst) {
        remove_ready(pick);
        t.state = State::Blocked;
        continue;
      }
      t.burst_left = charge(t, *burst);
      t.has_burst = true;
      if (t.burst_left == 0) {
        // Sub-microsecond burst absorbed by the carry: complete it in place.
        t.has_burst = false;
        t.body->on_burst_done(sim_.now());
        continue;
      }
    }
    dispatch(pick);
    return;
  }
}

std::int64_t Cpu::busy_time_us() const {
  std::int64_t sum = isr_time_ + switch_time_;
  for (const auto& t : tasks_) sum += t.cpu_used;
  return sum;
}

// ---------------------------------------------------------------------------

std::int64_t demand_bound(const ServerSpec& spec, MicroTime delta_us) {
  if (delta_us <= 0) throw std::invalid_argument("demand_bound: delta must be > 0");
  const std::int64_t periods = (delta_us + spec.period_us - 1) / spec.period_us;
  switch (spec.policy) {
    case ServerPolicy::Deferrable:
      return spec.budget * (periods + 1);
    case ServerPolicy::Sporadic:
      return spec.budget * periods;
  }
  return 0;
}

ServerState::ServerState(ServerSpec spec, MicroTime t0)
    : spec_(spec), t0_(t0), budget_(spec.budget), last_boundary_(t0) {
  if (spec.budget <= 0) throw std::invalid_argument("server budget must be > 0");
  if (spec.period_us <= 0) throw std::invalid_argument("server period must be > 0");
}

void ServerState::advance(MicroTime t) {
  if (spec_.policy == ServerPolicy::Deferrable) {
    if (t < t0_) return;
    const MicroTime boundary = t0_ + ((t - t0_) / spec_.period_us) * spec_.period_us;
    if (boundary > last_boundary_) {
      budget_ = spec_.budget;
      last_boundary_ = boundary;
    }
  } else {
    while (!replenish_.empty() && replenish_.front().first <= t) {
      budget_ = std::min(budget_ + replenish_.front().second, spec_.budget);
      replenish_.pop_front();
    }
  }
}

std::int64_t ServerState::account(std::int64_t request, MicroTime t) {
  advance(t);
  const std::int64_t grant = std::min(request, budget_);
  if (grant <= 0) return 0;
  budget_ -= grant;
  if (spec_.policy == ServerPolicy::Sporadic)
    replenish_.emplace_back(t + spec_.period_us, grant);
  return grant;
}

std::int64_t ServerState::available(MicroTime t) {
  advance(t);
  return budget_;
}

}  // namespace rtsim::rtos
