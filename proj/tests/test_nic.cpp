#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "rtsim/nic.hpp"

using namespace rtsim;
using namespace rtsim::nic;
using rtsim::traffic::TraceRecord;

namespace {

struct Rig {
  Simulation sim{1};
  MultiqueueNic nic;
  std::vector<IrqBatch> batches;

  explicit Rig(std::vector<NicQueueConfig> configs, MultiqueueNic::Options opt = {})
      : nic(sim, std::move(configs), opt) {
    nic.set_batch_handler([this](IrqBatch&& b) { batches.push_back(std::move(b)); });
  }

  void send(MicroTime t, std::uint16_t port, std::uint32_t len = 64) {
    TraceRecord r;
    r.t = t;
    r.dst_port = port;
    r.length = len;
    sim.schedule(t, EventKind::PacketArrival, [this, r] { nic.on_packet(r); });
  }
};

}  // namespace

TEST_CASE("classification: match, drop, default flow") {
  Rig rig({{0, 5001, 16, 0, 0, 0}, {1, 0, 16, 0, 0, 0}});
  TraceRecord hit;
  hit.dst_port = 5001;
  CHECK(rig.nic.classify(hit) == 0);
  TraceRecord miss;
  miss.dst_port = 9999;
  CHECK(rig.nic.classify(miss) == kDrop);
  TraceRecord arp;
  arp.dst_port = 0;  // non-transport sentinel
  CHECK(rig.nic.classify(arp) == 1);

  rig.send(0, 9999);
  rig.sim.run_until(10);
  CHECK(rig.nic.dropped_unmatched() == 1);
  CHECK(rig.nic.irq_count() == 0);  // dropped before any interrupt
}

TEST_CASE("unmoderated queue: immediate single-packet batches, zero added delay") {
  Rig rig({{0, 5001, 128, 0, 0, 0}});
  for (int i = 0; i < 5; ++i) rig.send(i * 100, 5001);
  rig.sim.run_until(1000);
  REQUIRE(rig.batches.size() == 5);
  for (const auto& b : rig.batches) {
    CHECK(b.packets.size() == 1);
    CHECK(b.reason == IrqReason::Immediate);
    CHECK(b.fired_at == b.packets[0].t);
  }
}

TEST_CASE("counter mode: interrupt every Nth packet") {
  Rig rig({{0, 5001, 1024, 0, 0, /*counter=*/600}});
  for (int i = 0; i < 1800; ++i) rig.send(i, 5001);
  rig.sim.run_until(10'000);
  REQUIRE(rig.batches.size() == 3);
  for (const auto& b : rig.batches) {
    CHECK(b.packets.size() == 600);
    CHECK(b.reason == IrqReason::Counter);
  }
}

TEST_CASE("absolute timer: one packet then silence fires at t_abs") {
  Rig rig({{0, 5001, 128, /*t_abs=*/30'000, /*t_pack=*/20'000, 0}});
  rig.send(0, 5001);
  rig.sim.run_until(100'000);
  REQUIRE(rig.batches.size() == 1);
  // the packet timer (20ms) fires first here since no further packet resets it
  CHECK(rig.batches[0].reason == IrqReason::PacketTimer);
  CHECK(rig.batches[0].fired_at == 20'000);
}

TEST_CASE("packet timer constantly reset; absolute timer bounds the wait") {
  Rig rig({{0, 5001, 128, /*t_abs=*/30'000, /*t_pack=*/20'000, 0}});
  for (int i = 0; i < 10; ++i) rig.send(i * 10'000, 5001);  // every 10ms < t_pack
  rig.sim.run_until(200'000);
  REQUIRE(!rig.batches.empty());
  CHECK(rig.batches[0].reason == IrqReason::AbsoluteTimer);
  CHECK(rig.batches[0].fired_at == 30'000);  // armed by the first packet
  for (const auto& b : rig.batches)
    for (const auto& p : b.packets) CHECK(b.fired_at - p.t <= 30'000);
}

TEST_CASE("timer mode alone can starve; pause flushes via packet timer") {
  Rig rig({{0, 5001, 1024, 0, /*t_pack=*/20'000, 0}});
  for (int i = 0; i < 50; ++i) rig.send(i * 10'000, 5001);
  rig.sim.run_until(490'001 + 100'000);
  REQUIRE(rig.batches.size() == 1);  // only after the flow pauses
  CHECK(rig.batches[0].reason == IrqReason::PacketTimer);
  CHECK(rig.batches[0].packets.size() == 50);
}

TEST_CASE("queue full drops newest") {
  Rig rig({{0, 5001, /*n_q=*/4, /*t_abs=*/1000, 0, 0}});
  for (int i = 0; i < 6; ++i) rig.send(i, 5001);
  rig.sim.run_until(5000);
  CHECK(rig.nic.dropped_queue_full() == 2);
  REQUIRE(rig.batches.size() == 1);
  CHECK(rig.batches[0].packets.size() == 4);
  CHECK(rig.batches[0].packets.back().t == 3);  // the oldest four survived
}

TEST_CASE("buffer swap: front and back exchanged, offset reset") {
  std::vector<NicQueueConfig> cfg{{0, 5001, 128, 1000, 0, 0}};
  cfg[0].buffer_bytes = 4096;
  Rig rig(cfg);
  const auto before = rig.nic.table_entry(0);
  rig.send(0, 5001, 100);
  rig.send(1, 5001, 100);
  rig.sim.run_until(2000);
  const auto after = rig.nic.table_entry(0);
  CHECK(after.front_addr == before.back_addr);
  CHECK(after.back_addr == before.front_addr);
  CHECK(after.offset == 0);
  CHECK(rig.nic.swap_count() == 1);
}

TEST_CASE("conservation: arrivals = delivered + unmatched + queue-full") {
  Simulation sim(3);
  auto& rng = sim.rng("mix");
  std::vector<NicQueueConfig> cfg{
      {0, 5001, 8, 2000, 500, 0}, {1, 5002, 4, 0, 0, 3}, {2, 0, 16, 0, 0, 0}};
  MultiqueueNic nic(sim, cfg);
  std::int64_t delivered = 0;
  nic.set_batch_handler([&](IrqBatch&& b) { delivered += b.packets.size(); });
  const std::uint16_t ports[] = {5001, 5002, 9999, 0};
  const int total = 5000;
  for (int i = 0; i < total; ++i) {
    TraceRecord r;
    r.t = static_cast<MicroTime>(rng.uniform_below(1'000'000));
    r.dst_port = ports[rng.uniform_below(4)];
    r.length = static_cast<std::uint32_t>(rng.uniform_below(1500));
    sim.schedule(r.t, EventKind::PacketArrival, [&nic, r] { nic.on_packet(r); });
  }
  sim.run_until(2'000'000);
  // flush what remains with unbind
  nic.unbind(5001);
  nic.unbind(5002);
  delivered += nic.held_packets(2);
  CHECK(delivered + nic.dropped_unmatched() + nic.dropped_queue_full() == total);
}

TEST_CASE("monotonicity: larger t_abs never gives more IRQs; combined <= packet-timer-only") {
  Simulation gen(9);
  auto& rng = gen.rng("trace");
  std::vector<TraceRecord> trace;
  MicroTime t = 0;
  for (int i = 0; i < 3000; ++i) {
    t += static_cast<MicroTime>(rng.uniform_below(800));
    TraceRecord r;
    r.t = t;
    r.dst_port = 5001;
    trace.push_back(r);
  }
  auto run = [&](MicroTime t_abs, MicroTime t_pack) {
    Simulation sim(1);
    MultiqueueNic nic(sim, {{0, 5001, 1 << 20, t_abs, t_pack, 0}});
    for (const auto& r : trace)
      sim.schedule(r.t, EventKind::PacketArrival, [&nic, r] { nic.on_packet(r); });
    sim.run_until(t + 10'000'000);
    return nic.irq_count();
  };
  std::int64_t prev = -1;
  for (MicroTime t_abs : {500, 1000, 2000, 4000, 8000, 16000}) {
    const auto irqs = run(t_abs, 400);
    if (prev >= 0) CHECK(irqs <= prev);
    prev = irqs;
  }
  CHECK(run(4000, 400) <= run(0, 400));  // combined dominates packet-timer-only
}

TEST_CASE("validate_config: WCPD and timer bounds") {
  // 4 queues x 128 packets at 10us each -> WCPD 5120us
  std::vector<NicQueueConfig> cfg;
  for (int i = 0; i < 4; ++i) cfg.push_back({i, static_cast<std::uint16_t>(5001 + i), 128, 0, 0, 0});
  cfg[3].t_abs_us = 200'000;
  cfg[3].t_d_us = 100'000;
  cfg[3].r_max_pps = 1000;  // t_qf = 128ms
  auto violations = validate_config(cfg, 10.0);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].queue_id == 3);
  CHECK(violations[0].check == "t_abs_bound");
  CHECK(violations[0].lhs == doctest::Approx(200'000));
  CHECK(violations[0].rhs == doctest::Approx(128'000 - 5'120));

  // shrink t_abs below the bound -> clean
  cfg[3].t_abs_us = 100'000;
  CHECK(validate_config(cfg, 10.0).empty());

  // discontiguous timers: t_pack > t_abs
  cfg[3].t_pack_us = 120'000;
  auto v2 = validate_config(cfg, 10.0);
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].check == "timer_order");
}

TEST_CASE("nic memory formula") {
  CHECK(nic_memory_bytes(1) == 44);
  CHECK(nic_memory_bytes(4) == 134);
  CHECK_THROWS(nic_memory_bytes(0));
}

TEST_CASE("irq cost model") {
  NicCostModel m{0.01, 5.0, 0.02, 7.0};
  IrqBatch b;
  b.packets.resize(1);
  b.packets[0].length = 100;
  auto [isr, task] = irq_cost(b, m);
  CHECK(isr == doctest::Approx(6.0));
  CHECK(task == doctest::Approx(9.0));

  IrqBatch zeros;
  zeros.packets.resize(10);  // zero-length
  auto [isr0, task0] = irq_cost(zeros, m);
  CHECK(isr0 == doctest::Approx(5.0));
  CHECK(task0 == doctest::Approx(7.0));

  // doubling lengths doubles the length-dependent term
  IrqBatch dbl = b;
  dbl.packets[0].length = 200;
  auto [isr2, task2] = irq_cost(dbl, m);
  CHECK(isr2 - m.dc_us == doctest::Approx(2 * (isr - m.dc_us)));
}

TEST_CASE("unbind flushes in-flight packets as one final batch") {
  Rig rig({{0, 5001, 128, 1'000'000, 0, 0}});
  rig.send(0, 5001);
  rig.send(1, 5001);
  rig.sim.run_until(10);
  CHECK(rig.batches.empty());
  rig.nic.unbind(5001);
  REQUIRE(rig.batches.size() == 1);
  CHECK(rig.batches[0].reason == IrqReason::Flush);
  CHECK(rig.batches[0].packets.size() == 2);
  // unbound now: packets to that port are dropped unmatched
  rig.send(20, 5001);
  rig.sim.run_until(100);
  CHECK(rig.nic.dropped_unmatched() == 1);
}

TEST_CASE("periodic absolute timer variant fires on its own grid") {
  Rig rig({{0, 5001, 128, /*t_abs=*/10'000, 0, 0}}, {.abs_timer_periodic = true});
  rig.send(15'000, 5001);
  rig.sim.run_until(100'000);
  REQUIRE(rig.batches.size() == 1);
  CHECK(rig.batches[0].fired_at == 20'000);  // next grid point after arrival
}
