#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtsim/sim.hpp"

namespace rtsim::rtos {

using TaskId = int;
constexpr TaskId kIdle = -1;

enum class TaskKind { PeriodicCritical, NetTask, Worker, Idle, Server, Busy };

struct TaskSpec {
  std::string name;
  int priority = 1;  // higher = more urgent; the implicit idle task sits below all
  TaskKind kind = TaskKind::Worker;
  MicroTime period_us = 0;    // for periodic tasks
  MicroTime deadline_us = 0;  // relative to release; 0 defaults to period
  MicroTime work_us = 0;      // CPU work per cycle, periodic tasks only
};

struct CycleRecord {
  TaskId task = kIdle;
  MicroTime release = 0;
  MicroTime finish = 0;
  MicroTime deadline_abs = 0;
};

// l = t_end - d. Negative values are earliness.
inline MicroTime lateness(const CycleRecord& rec) { return rec.finish - rec.deadline_abs; }

// Cooperative task logic driven by the scheduler. A body is asked for its next
// CPU burst whenever the task holds the CPU with nothing pending; returning
// nullopt blocks the task until wake().
class TaskBody {
 public:
  virtual ~TaskBody() = default;
  virtual std::optional<double> next_burst(MicroTime now) = 0;
  virtual void on_burst_done(MicroTime now) = 0;
};

struct CpuTrace {
  enum class SegKind { Task, Isr, Switch };
  struct Segment {
    SegKind kind;
    TaskId task;  // kIdle for ISR segments
    MicroTime start, end;
  };
  std::vector<Segment> segments;
};

// Fixed-priority preemptive scheduler over one simulated CPU.
//
// ISRs preempt any task unconditionally and do not nest: requests arriving
// during an ISR are queued and served FIFO after it. Equal-priority tasks
// round-robin on a fixed quantum. Fractional burst/ISR costs are accumulated
// and paid in whole microseconds so long-run CPU accounting stays exact.
class Cpu {
 public:
  struct IsrAction {
    double cost_us = 0;
    std::function<void()> effect;
  };

  Cpu(Simulation& sim, MicroTime quantum_us = 1000, MicroTime context_switch_us = 0);

  TaskId add_task(TaskSpec spec, std::unique_ptr<TaskBody> body = nullptr);
  void start();  // schedule initial releases; call once after all add_task calls

  void wake(TaskId id);
  void set_priority(TaskId id, int priority);
  int priority_of(TaskId id) const { return tasks_[id].spec.priority; }

  // `begin` runs when the IRQ is actually serviced (after any ISR already in
  // flight); its returned effect is applied at ISR completion.
  void request_isr(std::function<IsrAction()> begin);
  void request_isr(double cost_us, std::function<void()> effect);

  // Highest-priority ready task, round-robin order among equals; kIdle if none.
  TaskId pick_running() const;
  TaskId running() const { return running_; }
  bool in_isr() const { return isr_active_; }

  std::int64_t task_time_us(TaskId id) const { return tasks_[id].cpu_used; }
  std::int64_t isr_time_us() const { return isr_time_; }
  std::int64_t switch_time_us() const { return switch_time_; }
  std::int64_t busy_time_us() const;
  std::int64_t idle_time_us(MicroTime now) const { return now - busy_time_us(); }

  const std::vector<CycleRecord>& cycles() const { return cycles_; }
  const TaskSpec& spec_of(TaskId id) const { return tasks_[id].spec; }
  std::size_t task_count() const { return tasks_.size(); }

  // Called once per finished cycle of a periodic task; earliness is
  // deadline_abs - finish (negative when the deadline was missed).
  std::function<void(const CycleRecord&, MicroTime earliness)> on_cycle;

  // Enables segment capture for trace-based property checks.
  void collect_trace(CpuTrace* sink) { trace_ = sink; }

 private:
  enum class State { Blocked, Ready, Running };

  struct Task {
    TaskSpec spec;
    std::unique_ptr<TaskBody> body;
    State state = State::Blocked;
    MicroTime burst_left = 0;
    bool has_burst = false;
    double cost_carry = 0;  // fractional microseconds not yet charged
    std::int64_t cpu_used = 0;
    // periodic bookkeeping
    MicroTime cur_release = 0;
    MicroTime cur_deadline = 0;
  };

  void make_ready(TaskId id, bool front);
  void remove_ready(TaskId id);
  void preempt_running(MicroTime now);
  void reschedule();
  void reschedule_loop();
  void arm_quantum(TaskId id);
  void dispatch(TaskId id);
  void finish_burst();
  void release_periodic(TaskId id);
  void begin_next_isr();
  void finish_isr();
  MicroTime charge(Task& t, double cost_us);
  void record_segment(CpuTrace::SegKind kind, TaskId task, MicroTime start, MicroTime end);

  Simulation& sim_;
  MicroTime quantum_us_;
  MicroTime context_switch_us_;

  std::vector<Task> tasks_;
  std::map<int, std::deque<TaskId>, std::greater<int>> ready_;  // priority -> RR queue

  TaskId running_ = kIdle;
  MicroTime seg_start_ = 0;
  MicroTime switch_part_ = 0;  // leading context-switch portion of current segment
  EventId completion_{};
  EventId quantum_{};
  bool completion_pending_ = false;
  bool quantum_pending_ = false;

  bool isr_active_ = false;
  MicroTime isr_start_ = 0;
  std::function<void()> isr_effect_;
  std::deque<std::function<IsrAction()>> isr_queue_;
  double isr_carry_ = 0;

  std::int64_t isr_time_ = 0;
  std::int64_t switch_time_ = 0;
  std::vector<CycleRecord> cycles_;
  CpuTrace* trace_ = nullptr;
  bool started_ = false;
  bool resched_active_ = false;
  bool resched_requested_ = false;
};

// ---------------------------------------------------------------------------
// Aperiodic server budget accounting.

enum class ServerPolicy { Deferrable, Sporadic };

struct ServerSpec {
  std::int64_t budget = 0;   // execution budget e per period (us or packets)
  MicroTime period_us = 0;   // replenishment period p
  ServerPolicy policy = ServerPolicy::Deferrable;
};

// Highest possible demand inside any window of length delta:
// deferrable e*(ceil(delta/p)+1), sporadic e*ceil(delta/p).
std::int64_t demand_bound(const ServerSpec& spec, MicroTime delta_us);

// Budget state over time. Deferrable: full restore at each period boundary
// (anchored at t0). Sporadic: each granted chunk replenishes exactly one
// period after the grant.
class ServerState {
 public:
  explicit ServerState(ServerSpec spec, MicroTime t0 = 0);

  // Grants min(request, available budget at t); may be 0.
  std::int64_t account(std::int64_t request, MicroTime t);
  std::int64_t available(MicroTime t);

  const ServerSpec& spec() const { return spec_; }

 private:
  void advance(MicroTime t);

  ServerSpec spec_;
  MicroTime t0_;
  std::int64_t budget_;
  MicroTime last_boundary_;
  std::deque<std::pair<MicroTime, std::int64_t>> replenish_;
};

}  // namespace rtsim::rtos
