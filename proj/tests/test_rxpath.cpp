#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rtsim/rx_sim.hpp"
#include "rtsim/rxpath.hpp"

using namespace rtsim;
using namespace rtsim::rx;
using rtsim::traffic::TraceRecord;

namespace {

TraceRecord pkt(std::uint16_t port, MicroTime t = 0, bool frag = false) {
  TraceRecord r;
  r.t = t;
  r.dst_port = port;
  r.fragmented = frag;
  return r;
}

RxPath make_path(int pool = 8, std::int64_t hp_cap = 0, std::int64_t lp_cap = 0) {
  std::vector<FlowSpec> flows;
  FlowSpec hp;
  hp.dst_port = 5001;
  hp.priority = 6;
  hp.capacity_pkts = hp_cap;
  hp.period_us = 1'000'000;
  FlowSpec lp;
  lp.dst_port = 6001;
  lp.priority = 2;
  lp.capacity_pkts = lp_cap;
  lp.period_us = 1'000'000;
  flows = {hp, lp};
  FlowSpec def;
  def.priority = 1;
  RxCostModel costs{0.8, 0.0, 6.1, 5.6, 0.5, 0.5};
  RxPath::Options opt;
  opt.pool_size = pool;
  opt.recycle_threshold = 0.5;
  opt.net_base_priority = 1;
  return RxPath(flows, def, costs, opt);
}

}  // namespace

TEST_CASE("eager paths: regular, reject, shortcircuit, recycle") {
  auto path = make_path(/*pool=*/8, /*hp_cap=*/0, /*lp_cap=*/2);

  // empty system, HP packet -> regular
  auto r = path.eager_isr(pkt(5001), 0);
  CHECK(r.path == EagerPath::Regular);
  CHECK(r.isr_cost_us == doctest::Approx(0.8 + 0.5));  // classify + priority raise

  // LP flow capped at 2: the third is rejected, cheap
  CHECK(path.eager_isr(pkt(6001), 1).path == EagerPath::Regular);
  CHECK(path.eager_isr(pkt(6001), 2).path == EagerPath::Regular);
  auto rej = path.eager_isr(pkt(6001), 3);
  CHECK(rej.path == EagerPath::FlowReject);
  CHECK(rej.isr_cost_us == doctest::Approx(0.8));
  CHECK(path.counters(1).rejected == 1);

  // drain the pool with HP packets until below the recycle threshold
  while (path.queues().bd_ring_free() >= 4) path.eager_isr(pkt(5001), 4);
  // LP arrival, LP is lowest waiting -> shortcircuit (dropped)
  // (LP queue still holds its two packets: they are the lowest)
  auto sc = path.eager_isr(pkt(6001), 5);
  CHECK(sc.path == EagerPath::FlowReject);  // capacity still exhausted, rejected first
  // use default flow (unlimited, priority 1 = lowest waiting) instead
  auto sc2 = path.eager_isr(pkt(0), 6);
  CHECK(sc2.path == EagerPath::Shortcircuit);

  // HP arrival under pressure recycles one waiting LP buffer
  const auto lp_waiting = path.queues().waiting_in(1);
  auto rc = path.eager_isr(pkt(5001), 7);
  CHECK(rc.path == EagerPath::RecycleThenEnqueue);
  CHECK(rc.isr_cost_us == doctest::Approx(0.8 + 0.5));  // classify + recycle, no raise
  CHECK(path.queues().waiting_in(1) == lp_waiting - 1);
  CHECK(path.counters(1).recycled == 1);
}

TEST_CASE("net task priority follows waiting and in-processing packets") {
  auto path = make_path();
  CHECK(path.net_task_priority() == 1);  // base, nothing queued

  path.eager_isr(pkt(6001), 0);
  CHECK(path.net_task_priority() == 2);

  path.eager_isr(pkt(5001), 1);
  CHECK(path.net_task_priority() == 6);

  // HP packet enters processing; still 6 while in flight
  auto ps = path.begin_processing(2);
  REQUIRE(ps);
  CHECK(ps->flow == 0);
  CHECK(path.net_task_priority() == 6);

  // HP done, LP waiting -> drops to 2 immediately
  CHECK(path.finish_processing(3) == 2);
  CHECK(path.net_task_priority() == 2);
}

TEST_CASE("priority raise happens iff the new flow tops the current priority") {
  auto path = make_path();
  auto a = path.eager_isr(pkt(6001), 0);
  CHECK(a.raised_priority);  // 1 -> 2
  auto b = path.eager_isr(pkt(6001), 1);
  CHECK_FALSE(b.raised_priority);  // still 2
  auto c = path.eager_isr(pkt(5001), 2);
  CHECK(c.raised_priority);  // 2 -> 6
}

TEST_CASE("fragments land in the background flow") {
  auto path = make_path();
  const int bg = path.background_flow_index();
  auto r = path.eager_isr(pkt(5001, 0, /*frag=*/true), 0);
  CHECK(r.flow == bg);
  CHECK(path.flow_spec(bg).priority == 0);
}

TEST_CASE("delivery order across flows is priority order, FIFO within a flow") {
  auto path = make_path(64);
  path.eager_isr(pkt(6001, 0), 0);
  path.eager_isr(pkt(6001, 1), 1);
  path.eager_isr(pkt(5001, 2), 2);

  auto first = path.begin_processing(10);
  REQUIRE(first);
  CHECK(first->flow == 0);  // HP first regardless of arrival order
  path.finish_processing(11);
  auto second = path.begin_processing(12);
  CHECK(second->pkt.t == 0);  // LP in FIFO order
  path.finish_processing(13);
  auto third = path.begin_processing(14);
  CHECK(third->pkt.t == 1);
  path.finish_processing(15);
  CHECK_FALSE(path.begin_processing(16));
}

// ---------------------------------------------------------------------------
// Composed behavior through the simulation engine.

namespace {

RxScenario diffq_base() {
  RxScenario sc;
  sc.seed = 3;
  sc.duration_us = 2'000'000;
  sc.mode = RxMode::DiffQ;
  sc.rx_costs = {0.8, 0.0, 6.1, 5.6, 0.5, 0.5};
  sc.nic_cost.dc_us = 1.0;
  FlowSpec hp;
  hp.dst_port = 5001;
  hp.priority = 6;
  FlowSpec lp;
  lp.dst_port = 6001;
  lp.priority = 2;
  sc.flows = {hp, lp};
  FlowSpec def;
  def.priority = 1;
  sc.default_flow = def;
  sc.rx_options.pool_size = 256;
  sc.rx_options.net_base_priority = 1;
  sc.receivers = {{5001, 6, 0.0}, {6001, 2, 0.0}};
  return sc;
}

traffic::LoadSpec uniform(double pps, MicroTime dur, std::uint16_t port) {
  traffic::LoadSpec s;
  s.kind = traffic::LoadKind::Uniform;
  s.rate_pps = pps;
  s.duration_us = dur;
  s.dst_port = port;
  return s;
}

}  // namespace

TEST_CASE("medium-priority task is not preempted for low-priority packets") {
  auto sc = diffq_base();
  sc.busy_tasks = {{"medium", 4}};  // above LP flow (2), below HP flow (6)
  sc.records = traffic::merge({traffic::gen_uniform(uniform(1000, sc.duration_us, 6001)),
                               traffic::gen_uniform(uniform(100, sc.duration_us, 5001))});
  auto res = run_rx(sc);
  // HP packets get through: the net task inherits priority 6 over the medium hog
  CHECK(res.delivered_by_port[5001] == 200);
  // LP packets never get processed: the net task at priority 2 loses to the hog
  CHECK(res.delivered_by_port[6001] == 0);
  // and the packets pile up / get shortcircuited without any deferred/ip cost
  CHECK(res.flow_shortcircuit > 0);
}

TEST_CASE("rejected LP packets consume only ISR-stage costs") {
  auto sc = diffq_base();
  sc.busy_tasks = {{"medium", 4}};
  sc.records = traffic::gen_uniform(uniform(5000, sc.duration_us, 6001));
  auto res = run_rx(sc);
  CHECK(res.processed == 0);
  CHECK(res.cpu_driver_us == 0);
  // per-packet ISR cost: dc 1.0 + classify 0.8 (plus one early prio raise)
  const double per_pkt = res.network_cpu_us() / static_cast<double>(res.sent);
  CHECK(per_pkt == doctest::Approx(1.8).epsilon(0.01));
}

TEST_CASE("flow isolation: raising B's offered rate never lowers capped A's deliveries") {
  std::int64_t prev_a = -1;
  for (double b_rate : {500.0, 2000.0, 8000.0}) {
    auto sc = diffq_base();
    sc.flows[0].capacity_pkts = 200;  // A capped at 200/s
    sc.flows[0].period_us = 1'000'000;
    sc.records = traffic::merge({traffic::gen_uniform(uniform(400, sc.duration_us, 5001)),
                                 traffic::gen_uniform(uniform(b_rate, sc.duration_us, 6001))});
    auto res = run_rx(sc);
    const auto a = res.delivered_by_port[5001];
    if (prev_a >= 0) CHECK(a >= prev_a);
    prev_a = a;
  }
}

TEST_CASE("global limit switches to polling and back, lowering CPU load") {
  auto sc = diffq_base();
  sc.duration_us = 3'000'000;
  sc.global_limit = rtos::ServerSpec{1500, 1'000'000, rtos::ServerPolicy::Deferrable};
  sc.poll_priority = 1;
  sc.records = traffic::gen_uniform(uniform(2000, sc.duration_us, 6001));
  auto over = run_rx(sc);
  CHECK(over.polling_engagements >= 1);

  // same scenario, offered below the limit: stays in ISR mode
  auto sc2 = diffq_base();
  sc2.duration_us = 3'000'000;
  sc2.global_limit = sc.global_limit;
  sc2.records = traffic::gen_uniform(uniform(100, sc2.duration_us, 6001));
  auto under = run_rx(sc2);
  CHECK(under.polling_engagements == 0);

  // polling at the same offered rate costs less CPU than unlimited ISR mode
  auto sc3 = diffq_base();
  sc3.duration_us = 3'000'000;
  sc3.records = traffic::gen_uniform(uniform(2000, sc3.duration_us, 6001));
  auto isr_mode = run_rx(sc3);
  const double cpu_polling = over.network_cpu_us();
  const double cpu_isr = isr_mode.network_cpu_us();
  CHECK(cpu_polling < cpu_isr);
}

TEST_CASE("diffq conservation: every arrived packet is accounted once") {
  auto sc = diffq_base();
  sc.flows[1].capacity_pkts = 300;
  sc.flows[1].period_us = 1'000'000;
  sc.rx_options.pool_size = 64;
  sc.records = traffic::merge({traffic::gen_uniform(uniform(900, sc.duration_us, 5001)),
                               traffic::gen_uniform(uniform(4000, sc.duration_us, 6001)),
                               traffic::gen_uniform(uniform(50, sc.duration_us, 0))});
  auto res = run_rx(sc);
  std::int64_t arrived = 0, enq = 0, rej = 0, sc_drop = 0, recycled = 0, delivered = 0;
  for (const auto& f : res.flow_stats) {
    arrived += f.counters.arrived;
    enq += f.counters.enqueued;
    rej += f.counters.rejected;
    sc_drop += f.counters.shortcircuit;
    recycled += f.counters.recycled;
    delivered += f.counters.delivered;
  }
  CHECK(arrived == res.sent);
  CHECK(arrived == enq + rej + sc_drop);
  // enqueued packets either completed, got recycled, or are still waiting
  const std::int64_t outstanding = enq - delivered - recycled;
  CHECK(outstanding >= 0);
  CHECK(outstanding <= sc.rx_options.pool_size);
}
