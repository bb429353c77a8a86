#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rtsim/metrics.hpp"
#include "rtsim/rng.hpp"

namespace rtsim::traffic {

// One received frame: timestamp, length, destination port, source label.
// dst_port 0 is the sentinel for non-transport traffic (ARP class).
struct TraceRecord {
  MicroTime t = 0;
  std::uint32_t length = 0;  // bytes, <= 65535
  std::uint16_t dst_port = 0;
  std::string src_id;
  bool fragmented = false;

  bool operator==(const TraceRecord&) const = default;
};

enum class LoadKind { Uniform, Poisson, Burst, Pyramid, Trace };

struct LoadSpec {
  LoadKind kind = LoadKind::Uniform;
  double rate_pps = 0;       // uniform rate or poisson lambda, packets/second
  MicroTime duration_us = 0;
  MicroTime start_us = 0;    // offset applied to every record
  // burst
  std::int64_t burst_size = 0;
  MicroTime burst_gap_us = 0;
  // pyramid
  double peak_pps = 0;
  double step_pps = 0;
  MicroTime hold_us = 0;
  // trace
  std::string file;
  // applied to generated records
  std::uint16_t dst_port = 0;
  std::uint32_t length = 0;
  std::string src_id;
  bool fragmented = false;
};

// Constant receive frequency: spacing floor(1e6/rate) us, count floor(duration*rate/1e6).
std::vector<TraceRecord> gen_uniform(const LoadSpec& spec);

// Exponential inter-arrival gaps -ln(u)/lambda, u in (0,1], rounded to the
// nearest microsecond (0 allowed), truncated at duration.
std::vector<TraceRecord> gen_poisson(const LoadSpec& spec, RngStream& rng);

// Back-to-back packet groups: burst_size packets at the same timestamp, groups
// spaced burst_gap_us apart.
std::vector<TraceRecord> gen_burst(const LoadSpec& spec);

// Rate ramps 0 -> peak -> 0 in step_pps increments, each plateau held hold_us,
// uniform arrivals within a plateau.
std::vector<TraceRecord> gen_pyramid(const LoadSpec& spec);

// Plain-text trace: header line "t_us,length,dst_port,src_id", one record per
// line, LF endings, decimal integers. Throws std::runtime_error with a line
// number for malformed input, unsorted timestamps, or length > 65535.
std::vector<TraceRecord> load_trace(const std::string& path);

void save_trace(const std::string& path, const std::vector<TraceRecord>& records);

// Stable merge of several generated sequences into one time-sorted sequence.
std::vector<TraceRecord> merge(std::vector<std::vector<TraceRecord>> parts);

}  // namespace rtsim::traffic
