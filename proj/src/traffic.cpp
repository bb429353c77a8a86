#include "rtsim/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rtsim::traffic {

namespace {

TraceRecord stamp(const LoadSpec& spec, MicroTime t) {
  TraceRecord r;
  r.t = spec.start_us + t;
  r.length = spec.length;
  r.dst_port = spec.dst_port;
  r.src_id = spec.src_id;
  r.fragmented = spec.fragmented;
  return r;
}

}  // namespace

std::vector<TraceRecord> gen_uniform(const LoadSpec& spec) {
  if (spec.rate_pps <= 0) throw std::invalid_argument("gen_uniform: rate must be > 0");
  if (spec.duration_us <= 0) throw std::invalid_argument("gen_uniform: duration must be > 0");
  const MicroTime spacing = static_cast<MicroTime>(1e6 / spec.rate_pps);
  const auto count =
      static_cast<std::int64_t>(static_cast<double>(spec.duration_us) * spec.rate_pps / 1e6);
  std::vector<TraceRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(stamp(spec, i * spacing));
  return out;
}

std::vector<TraceRecord> gen_poisson(const LoadSpec& spec, RngStream& rng) {
  if (spec.rate_pps <= 0) throw std::invalid_argument("gen_poisson: lambda must be > 0");
  if (spec.duration_us <= 0) throw std::invalid_argument("gen_poisson: duration must be > 0");
  const double lambda_per_us = spec.rate_pps / 1e6;
  std::vector<TraceRecord> out;
  MicroTime t = 0;
  for (;;) {
    const double gap = -std::log(rng.uniform_open01()) / lambda_per_us;
    t += static_cast<MicroTime>(std::llround(gap));
    if (t >= spec.duration_us) break;
    out.push_back(stamp(spec, t));
  }
  return out;
}

std::vector<TraceRecord> gen_burst(const LoadSpec& spec) {
  if (spec.burst_size <= 0) throw std::invalid_argument("gen_burst: burst_size must be > 0");
  if (spec.burst_gap_us <= 0) throw std::invalid_argument("gen_burst: burst_gap must be > 0");
  if (spec.duration_us <= 0) throw std::invalid_argument("gen_burst: duration must be > 0");
  std::vector<TraceRecord> out;
  for (MicroTime t = 0; t < spec.duration_us; t += spec.burst_gap_us)
    for (std::int64_t i = 0; i < spec.burst_size; ++i) out.push_back(stamp(spec, t));
  return out;
}

std::vector<TraceRecord> gen_pyramid(const LoadSpec& spec) {
  if (spec.step_pps <= 0) throw std::invalid_argument("gen_pyramid: step must be > 0");
  if (spec.peak_pps < spec.step_pps)
    throw std::invalid_argument("gen_pyramid: peak must be >= step");
  if (spec.hold_us <= 0) throw std::invalid_argument("gen_pyramid: hold must be > 0");

  std::vector<double> rates;
  for (double r = spec.step_pps; r < spec.peak_pps; r += spec.step_pps) rates.push_back(r);
  rates.push_back(spec.peak_pps);
  for (std::size_t i = rates.size() - 1; i-- > 0;) rates.push_back(rates[i]);

  std::vector<TraceRecord> out;
  MicroTime base = 0;
  for (double rate : rates) {
    LoadSpec seg = spec;
    seg.rate_pps = rate;
    seg.duration_us = spec.hold_us;
    seg.start_us = spec.start_us + base;
    auto part = gen_uniform(seg);
    out.insert(out.end(), part.begin(), part.end());
    base += spec.hold_us;
  }
  return out;
}

std::vector<TraceRecord> load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trace: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) return {};  // empty file: empty sequence
  if (line != "t_us,length,dst_port,src_id")
    throw std::runtime_error(path + ":1: expected header 't_us,length,dst_port,src_id'");

  std::vector<TraceRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string f0, f1, f2, f3;
    if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') || !std::getline(ss, f2, ',') ||
        !std::getline(ss, f3))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    TraceRecord r;
    try {
      r.t = std::stoll(f0);
      const long length = std::stol(f1);
      const long port = std::stol(f2);
      if (length < 0) throw std::runtime_error("negative length");
      if (length > 65535)
        throw std::runtime_error("length exceeds 65535");
      if (port < 0 || port > 65535) throw std::runtime_error("port out of range");
      r.length = static_cast<std::uint32_t>(length);
      r.dst_port = static_cast<std::uint16_t>(port);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    r.src_id = f3;
    if (!out.empty() && r.t < out.back().t)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": timestamps not sorted ascending");
    out.push_back(std::move(r));
  }
  return out;
}

void save_trace(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream out(path, std::ios::binary);  // LF endings everywhere
  if (!out) throw std::runtime_error("save_trace: cannot open " + path);
  out << "t_us,length,dst_port,src_id\n";
  for (const auto& r : records)
    out << r.t << ',' << r.length << ',' << r.dst_port << ',' << r.src_id << '\n';
}

std::vector<TraceRecord> merge(std::vector<std::vector<TraceRecord>> parts) {
  std::vector<TraceRecord> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const TraceRecord& a, const TraceRecord& b) { return a.t < b.t; });
  return out;
}

}  // namespace rtsim::traffic
