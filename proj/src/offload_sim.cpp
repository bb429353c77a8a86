#include "rtsim/offload_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "rtsim/sim.hpp"

namespace rtsim::offload {

namespace {

class Engine {
 public:
  explicit Engine(const OffloadScenario& sc) : sc_(sc), sim_(sc.seed) {}

  OffloadResult run();

 private:
  enum class Outcome { Open, Successful, Missed, Rejected, Timeout, Lost };

  struct TaskRecord {
    OffloadTask task;
    MicroTime submitted_at = 0;
    MicroTime comm_us = 0;   // accumulated network transit
    int attempt = 1;
    bool adjusted = false;
    bool responded = false;  // client saw ACCEPT or REJECT
    bool accept_counted = false;
    bool accept_counted_per_worker = false;
    Outcome outcome = Outcome::Open;
    std::set<int> visited;   // distributed forwarding chain
  };

  struct WorkerState {
    int id = 0;
    bool alive = true;
    std::vector<int> pending;  // task ids, scheduler-side queue
    int running = -1;
    MicroTime run_start = 0;
    EventId finish_ev{};
    bool finish_pending = false;
    std::map<int, double> known_density;  // distributed view of peers
  };

  struct ClientState {
    int id = 0;
    ClosestNodes closest;
    int outstanding = -1;
  };

  // --- helpers
  MicroTime wl() { return sc_.wireless.sample(sim_.rng("lat-wireless")); }
  MicroTime wd() { return sc_.wired.sample(sim_.rng("lat-wired")); }

  WorkerQueue snapshot(const WorkerState& w, MicroTime now) const;
  double node_density(const WorkerState& w, MicroTime now) const;
  MicroTime live_te(const WorkerState& w, MicroTime now) const;

  void schedule_submission(int client, MicroTime from);
  void submit(int client);
  void scheduler_arrival(int tid);
  void node_request(int node, int tid);
  void reply(int tid, bool accepted_flag);
  void client_response(int tid, bool accepted_flag);
  void enqueue_task(int w, int tid);
  void worker_kick(int w);
  void kick_global();
  void start_on(WorkerState& w, int tid);
  void preempt_on(WorkerState& w);
  void worker_finish(int w);
  void client_result(int tid, MicroTime arrive);
  void resolve(int tid, Outcome o);
  void client_timeout_check(int tid, int attempt);
  void send_request_to(int node, int tid);
  void broadcast_density(int from);
  void advertise(int node);
  void kill_node(int node);

  const OffloadScenario& sc_;
  Simulation sim_;
  std::vector<WorkerState> workers_;
  std::vector<ClientState> clients_;
  std::map<int, TaskRecord> tasks_;
  std::map<int, MicroTime> conn_ready_;  // task id -> client connection ready
  std::vector<int> global_pending_;      // reference scheduler
  int next_task_id_ = 0;
  OffloadResult res_;
  double e2e_sum_ = 0, comm_sum_ = 0;
};

WorkerQueue Engine::snapshot(const WorkerState& w, MicroTime now) const {
  WorkerQueue q;
  q.id = w.id;
  for (int tid : w.pending) q.tasks.push_back(tasks_.at(tid).task);
  if (w.running >= 0) {
    OffloadTask t = tasks_.at(w.running).task;
    t.t_e = live_te(w, now);
    q.tasks.push_back(t);
  }
  return q;
}

MicroTime Engine::live_te(const WorkerState& w, MicroTime now) const {
  const auto& t = tasks_.at(w.running).task;
  return std::min(t.t_w, t.t_e + (now - w.run_start));
}

double Engine::node_density(const WorkerState& w, MicroTime now) const {
  return snapshot(w, now).total_density(now);
}

void Engine::schedule_submission(int client, MicroTime from) {
  const double gap =
      -std::log(sim_.rng("gap-client-" + std::to_string(client)).uniform_open01()) /
      (sc_.submission_lambda_per_s / 1e6);
  const MicroTime at = from + static_cast<MicroTime>(std::llround(gap));
  if (at >= sc_.duration_us) return;
  sim_.schedule(at, EventKind::NodeMessage, [this, client] { submit(client); });
}

void Engine::submit(int client) {
  ClientState& c = clients_[client];
  if (sc_.distributed && !c.closest.nth(0)) {
    // No node advertised yet; check again shortly.
    sim_.schedule(sim_.now() + 10'000, EventKind::NodeMessage, [this, client] { submit(client); });
    return;
  }
  const MicroTime now = sim_.now();
  const int tid = next_task_id_++;
  TaskRecord rec;
  rec.task.id = tid;
  rec.task.client = client;
  rec.task.t_w = sc_.task_wcet_us;
  const double stddev =
      sc_.laxity_stddev_us > 0 ? sc_.laxity_stddev_us : sc_.laxity_mean_us / 3.0;
  const double laxity =
      sim_.rng("laxity").normal_truncated(sc_.laxity_mean_us, stddev, 0.0);
  rec.task.t_r = rec.task.t_w + static_cast<MicroTime>(std::llround(laxity));
  rec.task.deadline_abs = now + rec.task.t_r;
  rec.task.original_deadline = rec.task.deadline_abs;
  rec.task.t_cs = static_cast<MicroTime>(std::llround(sc_.t_cs_factor * static_cast<double>(wl())));
  rec.submitted_at = now;
  tasks_[tid] = std::move(rec);
  c.outstanding = tid;
  ++res_.submitted;

  if (sc_.distributed) {
    const int target = *c.closest.nth(0);
    send_request_to(target, tid);
    const int attempt = tasks_[tid].attempt;
    sim_.schedule(now + sc_.response_timeout_us, EventKind::NodeMessage,
                  [this, tid, attempt] { client_timeout_check(tid, attempt); });
  } else {
    const MicroTime l1 = wl();
    tasks_[tid].comm_us += l1;
    sim_.schedule(now + l1, EventKind::NodeMessage, [this, tid] { scheduler_arrival(tid); });
  }
}

void Engine::send_request_to(int node, int tid) {
  const MicroTime l = wl();
  tasks_[tid].comm_us += l;
  sim_.schedule(sim_.now() + l, EventKind::NodeMessage, [this, node, tid] {
    node_request(node, tid);
  });
}

void Engine::scheduler_arrival(int tid) {
  TaskRecord& rec = tasks_[tid];
  const MicroTime now = sim_.now();

  if (sc_.scheduler == SchedulerKind::Reference) {
    if (rec.task.deadline_abs - now < rec.task.t_w) {
      reply(tid, false);
      return;
    }
    ++res_.accepted;
    rec.accept_counted = true;
    global_pending_.push_back(tid);
    reply(tid, true);
    const MicroTime d = wd();
    sim_.schedule(now + d, EventKind::NodeMessage, [this] { kick_global(); });
    return;
  }

  if (!rec.adjusted) {
    const auto adj = adjust_deadline(rec.task, now, sc_.uncertainty);
    rec.task.deadline_abs = adj.new_deadline;
    rec.adjusted = true;
  }
  std::vector<WorkerQueue> queues;
  queues.reserve(workers_.size());
  for (const auto& w : workers_) queues.push_back(snapshot(w, now));
  const auto chosen = accept(rec.task, queues, sc_.heuristic, now);
  if (!chosen) {
    reply(tid, false);
    return;
  }
  ++res_.accepted;
  rec.accept_counted = true;
  ++res_.accepted_per_worker[*chosen];
  enqueue_task(*chosen, tid);
  reply(tid, true);
}

void Engine::node_request(int node, int tid) {
  WorkerState& w = workers_[node];
  if (!w.alive) return;  // the message dies with the node; client times out
  TaskRecord& rec = tasks_[tid];
  if (rec.outcome != Outcome::Open || rec.responded) return;  // stale forward
  const MicroTime now = sim_.now();
  rec.visited.insert(node);

  if (!rec.adjusted) {
    const auto adj = adjust_deadline(rec.task, now, sc_.uncertainty);
    rec.task.deadline_abs = adj.new_deadline;
    rec.adjusted = true;
  }

  std::vector<WorkerQueue> self{snapshot(w, now)};
  if (accept(rec.task, self, FitHeuristic::FirstFit, now)) {
    if (!rec.accept_counted) {
      ++res_.accepted;
      rec.accept_counted = true;
      ++res_.accepted_per_worker[node];
    }
    enqueue_task(node, tid);
    reply(tid, true);
    broadcast_density(node);
    return;
  }

  // Infeasible here: forward to the least-dense known node not yet visited.
  int best = -1;
  double best_density = 0;
  for (const auto& [peer, dens] : w.known_density) {
    if (rec.visited.count(peer)) continue;
    if (best < 0 || dens < best_density) {
      best = peer;
      best_density = dens;
    }
  }
  if (best < 0) {
    reply(tid, false);
    return;
  }
  ++res_.forwards;
  const MicroTime d = wd();
  rec.comm_us += d;
  sim_.schedule(now + d, EventKind::NodeMessage, [this, best, tid] { node_request(best, tid); });
}

void Engine::reply(int tid, bool accepted_flag) {
  const MicroTime l = wl();
  tasks_[tid].comm_us += l;
  sim_.schedule(sim_.now() + l, EventKind::NodeMessage,
                [this, tid, accepted_flag] { client_response(tid, accepted_flag); });
}

void Engine::client_response(int tid, bool accepted_flag) {
  TaskRecord& rec = tasks_[tid];
  if (rec.responded || rec.outcome != Outcome::Open) return;
  rec.responded = true;
  if (!accepted_flag) resolve(tid, Outcome::Rejected);
  // Accepted: the client now waits for the result.
}

void Engine::client_timeout_check(int tid, int attempt) {
  TaskRecord& rec = tasks_[tid];
  if (rec.responded || rec.outcome != Outcome::Open) return;
  if (rec.attempt != attempt) return;
  ClientState& c = clients_[rec.task.client];
  if (attempt == 1) {
    // No response: try the second-closest node with the same request.
    auto second = c.closest.nth(1);
    if (!second) second = c.closest.nth(0);
    if (second) {
      rec.attempt = 2;
      ++res_.fallback_requests;
      send_request_to(*second, tid);
      sim_.schedule(sim_.now() + sc_.response_timeout_us, EventKind::NodeMessage,
                    [this, tid] { client_timeout_check(tid, 2); });
      return;
    }
  }
  resolve(tid, Outcome::Timeout);
}

void Engine::enqueue_task(int w, int tid) {
  workers_[w].pending.push_back(tid);
  if (sc_.distributed) {
    worker_kick(w);  // scheduler and worker share the node
  } else {
    const MicroTime d = wd();
    sim_.schedule(sim_.now() + d, EventKind::NodeMessage, [this, w] { worker_kick(w); });
  }
}

void Engine::start_on(WorkerState& w, int tid) {
  TaskRecord& rec = tasks_[tid];
  const MicroTime now = sim_.now();
  w.running = tid;
  w.run_start = now;
  // The worker opens the client connection when it first receives the task,
  // in parallel with the computation.
  if (conn_ready_.find(tid) == conn_ready_.end()) conn_ready_[tid] = now + rec.task.t_cs;
  const int wid = w.id;
  w.finish_ev = sim_.schedule(now + rec.task.remaining(), EventKind::NodeMessage,
                              [this, wid] { worker_finish(wid); });
  w.finish_pending = true;
}

void Engine::preempt_on(WorkerState& w) {
  TaskRecord& rec = tasks_[w.running];
  rec.task.t_e = live_te(w, sim_.now());
  if (w.finish_pending) {
    sim_.cancel(w.finish_ev);
    w.finish_pending = false;
  }
  w.pending.push_back(w.running);
  w.running = -1;
  ++res_.preemptions;
}

void Engine::worker_kick(int wi) {
  WorkerState& w = workers_[wi];
  if (!w.alive) return;
  if (w.pending.empty()) return;
  auto edf_min = [this](const std::vector<int>& ids) {
    int best = -1;
    for (int tid : ids) {
      if (best < 0 || tasks_.at(tid).task.deadline_abs < tasks_.at(best).task.deadline_abs ||
          (tasks_.at(tid).task.deadline_abs == tasks_.at(best).task.deadline_abs && tid < best))
        best = tid;
    }
    return best;
  };
  const int min_tid = edf_min(w.pending);
  if (w.running >= 0) {
    if (tasks_.at(min_tid).task.deadline_abs < tasks_.at(w.running).task.deadline_abs)
      preempt_on(w);
    else
      return;
  }
  const int next = edf_min(w.pending);
  w.pending.erase(std::find(w.pending.begin(), w.pending.end(), next));
  start_on(w, next);
}

void Engine::kick_global() {
  // Global EDF: the m earliest deadlines run.
  auto edf_min = [this](const std::vector<int>& ids) -> int {
    int best = -1;
    for (int tid : ids) {
      if (best < 0 || tasks_.at(tid).task.deadline_abs < tasks_.at(best).task.deadline_abs ||
          (tasks_.at(tid).task.deadline_abs == tasks_.at(best).task.deadline_abs && tid < best))
        best = tid;
    }
    return best;
  };
  for (;;) {
    if (global_pending_.empty()) return;
    const int next = edf_min(global_pending_);
    WorkerState* idle = nullptr;
    for (auto& w : workers_)
      if (w.alive && w.running < 0) {
        idle = &w;
        break;
      }
    if (idle) {
      global_pending_.erase(std::find(global_pending_.begin(), global_pending_.end(), next));
      TaskRecord& rec = tasks_.at(next);
      if (!rec.accept_counted_per_worker) {
        rec.accept_counted_per_worker = true;
        ++res_.accepted_per_worker[idle->id];
      }
      start_on(*idle, next);
      continue;
    }
    // Preempt the latest-deadline running task if the new head beats it.
    WorkerState* victim = nullptr;
    for (auto& w : workers_) {
      if (!w.alive || w.running < 0) continue;
      if (!victim ||
          tasks_.at(w.running).task.deadline_abs > tasks_.at(victim->running).task.deadline_abs)
        victim = &w;
    }
    if (!victim) return;
    if (tasks_.at(next).task.deadline_abs >= tasks_.at(victim->running).task.deadline_abs) return;
    preempt_on(*victim);
    global_pending_.push_back(victim->pending.back());
    victim->pending.pop_back();
    // start the new head on the freed worker next loop iteration
  }
}

void Engine::worker_finish(int wi) {
  WorkerState& w = workers_[wi];
  w.finish_pending = false;
  const int tid = w.running;
  TaskRecord& rec = tasks_[tid];
  rec.task.t_e = rec.task.t_w;
  w.running = -1;
  const MicroTime now = sim_.now();

  const MicroTime depart = std::max(now, conn_ready_[tid]);
  const MicroTime l2 = wl();
  rec.comm_us += l2;
  const MicroTime arrive = depart + l2;
  sim_.schedule(arrive, EventKind::NodeMessage, [this, tid, arrive] { client_result(tid, arrive); });

  if (sc_.distributed) {
    broadcast_density(wi);
    worker_kick(wi);
  } else if (sc_.scheduler == SchedulerKind::Reference) {
    const MicroTime d = wd() + wd();  // completion notice + next dispatch
    sim_.schedule(now + d, EventKind::NodeMessage, [this] { kick_global(); });
  } else {
    const MicroTime d = wd() + wd();
    sim_.schedule(now + d, EventKind::NodeMessage, [this, wi] { worker_kick(wi); });
  }
}

void Engine::client_result(int tid, MicroTime arrive) {
  TaskRecord& rec = tasks_[tid];
  if (rec.outcome != Outcome::Open) return;  // already lost or timed out
  if (arrive <= rec.task.original_deadline) {
    e2e_sum_ += static_cast<double>(arrive - rec.submitted_at);
    comm_sum_ += static_cast<double>(rec.comm_us);
    resolve(tid, Outcome::Successful);
  } else {
    resolve(tid, Outcome::Missed);
  }
}

void Engine::resolve(int tid, Outcome o) {
  TaskRecord& rec = tasks_[tid];
  if (rec.outcome != Outcome::Open) return;
  rec.outcome = o;
  switch (o) {
    case Outcome::Successful: ++res_.successful; break;
    case Outcome::Missed: ++res_.missed; break;
    case Outcome::Rejected: ++res_.rejected; break;
    case Outcome::Timeout: ++res_.timeouts; break;
    case Outcome::Lost: ++res_.lost_to_failure; break;
    case Outcome::Open: break;
  }
  // The client only ever has one task in flight; completion gates the next one.
  schedule_submission(rec.task.client, sim_.now());
}

void Engine::broadcast_density(int from) {
  WorkerState& w = workers_[from];
  if (!w.alive) return;
  const double d = node_density(w, sim_.now());
  for (auto& peer : workers_) {
    if (peer.id == from) continue;
    ++res_.density_messages;
    const MicroTime delay = wd();
    const int from_id = from;
    const int to_id = peer.id;
    sim_.schedule(sim_.now() + delay, EventKind::NodeMessage, [this, from_id, to_id, d] {
      if (workers_[to_id].alive) workers_[to_id].known_density[from_id] = d;
    });
  }
}

void Engine::advertise(int node) {
  WorkerState& w = workers_[node];
  if (w.alive) {
    for (auto& c : clients_) {
      const MicroTime l = wl();
      const int cid = c.id;
      sim_.schedule(sim_.now() + l, EventKind::NodeMessage, [this, cid, node, l] {
        clients_[cid].closest.update(node, l);
      });
    }
  }
  const MicroTime next = sim_.now() + sc_.advert_period_us;
  if (next < sc_.duration_us)
    sim_.schedule(next, EventKind::NodeMessage, [this, node] { advertise(node); });
}

void Engine::kill_node(int node) {
  WorkerState& w = workers_[node];
  w.alive = false;
  std::vector<int> resident = w.pending;
  if (w.running >= 0) resident.push_back(w.running);
  if (w.finish_pending) {
    sim_.cancel(w.finish_ev);
    w.finish_pending = false;
  }
  w.pending.clear();
  w.running = -1;
  for (int tid : resident) {
    resolve(tid, Outcome::Lost);
  }
}

OffloadResult Engine::run() {
  workers_.resize(sc_.workers);
  res_.accepted_per_worker.assign(sc_.workers, 0);
  for (int i = 0; i < sc_.workers; ++i) {
    workers_[i].id = i;
    if (sc_.distributed)
      for (int j = 0; j < sc_.workers; ++j)
        if (j != i) workers_[i].known_density[j] = 0;
  }
  clients_.resize(sc_.clients);
  for (int i = 0; i < sc_.clients; ++i) clients_[i].id = i;

  if (sc_.distributed)
    for (int i = 0; i < sc_.workers; ++i)
      sim_.schedule(0, EventKind::NodeMessage, [this, i] { advertise(i); });

  for (int c = 0; c < sc_.clients; ++c) schedule_submission(c, 0);

  for (const auto& f : sc_.failures)
    sim_.schedule(f.at_us, EventKind::NodeMessage, [this, n = f.node] { kill_node(n); });

  sim_.run_until(sc_.duration_us);

  res_.unresolved = res_.submitted - res_.successful - res_.missed - res_.rejected -
                    res_.timeouts - res_.lost_to_failure;
  if (res_.successful > 0) {
    res_.mean_e2e_us = e2e_sum_ / static_cast<double>(res_.successful);
    res_.mean_comm_us = comm_sum_ / static_cast<double>(res_.successful);
  }
  return res_;
}

}  // namespace

OffloadResult run_offload(const OffloadScenario& scenario) {
  Engine e(scenario);
  return e.run();
}

}  // namespace rtsim::offload
