#include "rtsim/rxpath.hpp"

#include <stdexcept>

namespace rtsim::rx {

const char* to_string(EagerPath p) {
  switch (p) {
    case EagerPath::Regular: return "regular";
    case EagerPath::Shortcircuit: return "shortcircuit";
    case EagerPath::RecycleThenEnqueue: return "recycle";
    case EagerPath::FlowReject: return "flow-reject";
  }
  return "?";
}

DiffFlowQueues::DiffFlowQueues(int pool_size, double recycle_threshold)
    : pool_size_(pool_size), recycle_threshold_(recycle_threshold) {
  if (pool_size <= 0) throw std::invalid_argument("buffer pool must be > 0");
}

int DiffFlowQueues::add_flow(int priority) {
  const int flow = static_cast<int>(queues_.size());
  queues_.emplace_back();
  priority_.push_back(priority);
  by_priority_[priority].push_back(flow);
  return flow;
}

void DiffFlowQueues::push(int flow, const traffic::TraceRecord& pkt) {
  queues_[flow].push_back(pkt);
  ++waiting_;
}

std::optional<DiffFlowQueues::Queued> DiffFlowQueues::pop_highest() {
  for (const auto& [prio, flows] : by_priority_) {
    for (int flow : flows) {
      auto& q = queues_[flow];
      if (q.empty()) continue;
      Queued out{flow, q.front()};
      q.pop_front();
      --waiting_;
      ++in_processing_;
      return out;
    }
  }
  return std::nullopt;
}

void DiffFlowQueues::release_buffer() {
  if (in_processing_ <= 0) throw std::logic_error("release_buffer with nothing in processing");
  --in_processing_;
}

int DiffFlowQueues::drop_one_lowest() {
  for (auto it = by_priority_.rbegin(); it != by_priority_.rend(); ++it) {
    for (int flow : it->second) {
      auto& q = queues_[flow];
      if (q.empty()) continue;
      q.pop_back();  // newest of the lowest band
      --waiting_;
      return flow;
    }
  }
  return -1;
}

bool DiffFlowQueues::below_recycle_threshold() const {
  return static_cast<double>(bd_ring_free()) < recycle_threshold_ * pool_size_;
}

std::optional<int> DiffFlowQueues::highest_waiting_priority() const {
  for (const auto& [prio, flows] : by_priority_)
    for (int flow : flows)
      if (!queues_[flow].empty()) return prio;
  return std::nullopt;
}

std::optional<int> DiffFlowQueues::lowest_waiting_priority() const {
  for (auto it = by_priority_.rbegin(); it != by_priority_.rend(); ++it)
    for (int flow : it->second)
      if (!queues_[flow].empty()) return it->first;
  return std::nullopt;
}

RxPath::RxPath(std::vector<FlowSpec> flows, std::optional<FlowSpec> default_flow,
               RxCostModel costs, Options opt)
    : flows_(std::move(flows)),
      costs_(costs),
      opt_(opt),
      queues_(opt.pool_size, opt.recycle_threshold) {
  if (default_flow) {
    default_flow->dst_port = 0;
    default_flow_ = static_cast<int>(flows_.size());
    flows_.push_back(*default_flow);
  }
  // Fragments always have somewhere to go: a background-priority flow.
  FlowSpec bg;
  bg.priority = opt.background_priority;
  background_flow_ = static_cast<int>(flows_.size());
  flows_.push_back(bg);

  for (int i = 0; i < static_cast<int>(flows_.size()); ++i) {
    const auto& f = flows_[i];
    if (f.dst_port != 0 && i != background_flow_) port_to_flow_[f.dst_port] = i;
    if (f.capacity_pkts > 0 && f.period_us > 0)
      servers_.emplace_back(rtos::ServerState(
          rtos::ServerSpec{f.capacity_pkts, f.period_us, rtos::ServerPolicy::Deferrable}));
    else
      servers_.emplace_back(std::nullopt);
    queues_.add_flow(f.priority);
  }
  counters_.resize(flows_.size());
}

int RxPath::classify_flow(const traffic::TraceRecord& pkt) const {
  if (pkt.fragmented) return background_flow_;
  if (pkt.dst_port == 0) return default_flow_;
  auto it = port_to_flow_.find(pkt.dst_port);
  if (it == port_to_flow_.end()) return -1;
  const auto& f = flows_[it->second];
  if (!f.src.empty() && !pkt.src_id.empty() && f.src != pkt.src_id) return -1;
  return it->second;
}

RxPath::EagerResult RxPath::eager_isr(const traffic::TraceRecord& pkt, MicroTime t) {
  EagerResult res;
  res.isr_cost_us = costs_.isr_classify_us + costs_.isr_cache_hdr_us;
  const int prev_priority = net_task_priority();
  res.net_priority = prev_priority;

  const int flow = classify_flow(pkt);
  res.flow = flow;
  if (flow < 0) {
    res.path = EagerPath::FlowReject;
    return res;
  }
  auto& ctr = counters_[flow];
  ++ctr.arrived;

  if (servers_[flow] && servers_[flow]->account(1, t) == 0) {
    res.path = EagerPath::FlowReject;
    ++ctr.rejected;
    return res;
  }

  if (queues_.below_recycle_threshold()) {
    const auto lowest = queues_.lowest_waiting_priority();
    if (!lowest || flows_[flow].priority <= *lowest) {
      res.path = EagerPath::Shortcircuit;
      ++ctr.shortcircuit;
      return res;
    }
    const int victim = queues_.drop_one_lowest();
    if (victim >= 0) ++counters_[victim].recycled;
    res.isr_cost_us += costs_.recycle_us;
    res.path = EagerPath::RecycleThenEnqueue;
  } else {
    res.path = EagerPath::Regular;
  }

  queues_.push(flow, pkt);
  ++ctr.enqueued;
  const int now_priority = net_task_priority();
  res.net_priority = now_priority;
  if (now_priority > prev_priority) {
    res.raised_priority = true;
    res.isr_cost_us += costs_.prio_change_us;
  }
  return res;
}

int RxPath::net_task_priority() const {
  int p = opt_.net_base_priority;
  if (const auto w = queues_.highest_waiting_priority(); w && *w > p) p = *w;
  if (processing_flow_ && flows_[*processing_flow_].priority > p)
    p = flows_[*processing_flow_].priority;
  return p;
}

std::optional<RxPath::ProcessStart> RxPath::begin_processing(MicroTime) {
  if (processing_flow_) throw std::logic_error("begin_processing while a packet is in flight");
  auto q = queues_.pop_highest();
  if (!q) return std::nullopt;
  processing_flow_ = q->flow;
  return ProcessStart{q->flow, q->pkt, costs_.deferred_driver_us, costs_.ip_task_us};
}

int RxPath::finish_processing(MicroTime) {
  if (!processing_flow_) throw std::logic_error("finish_processing with nothing in flight");
  ++counters_[*processing_flow_].delivered;
  queues_.release_buffer();
  processing_flow_.reset();
  return net_task_priority();
}

}  // namespace rtsim::rx
