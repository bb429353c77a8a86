#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtsim {

using MicroTime = std::int64_t;  // microseconds since simulation start

// Append-only record of timed samples and named counters.
struct MetricsLog {
  struct Row {
    MicroTime t;
    std::string name;
    double value;
    bool operator==(const Row&) const = default;
  };

  std::vector<Row> rows;
  std::map<std::string, std::int64_t> counters;

  void sample(MicroTime t, std::string name, double value) {
    if (!rows.empty() && t < rows.back().t)
      throw std::logic_error("MetricsLog: sample time went backwards");
    rows.push_back(Row{t, std::move(name), value});
  }

  void add(const std::string& name, std::int64_t delta = 1) { counters[name] += delta; }

  std::int64_t counter(const std::string& name) const {
    auto it = counters.find(name);
    return it == counters.end() ? 0 : it->second;
  }

  bool operator==(const MetricsLog&) const = default;
};

}  // namespace rtsim
