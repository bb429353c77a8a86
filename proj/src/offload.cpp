#include "rtsim/offload.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rtsim::offload {

DeadlineAdjustment adjust_deadline(const OffloadTask& task, MicroTime now, double uncertainty) {
  DeadlineAdjustment out;
  out.d_exp = task.t_r - (task.deadline_abs - now);
  if (out.d_exp < 0) {
    out.d_exp = 0;
    out.clamped = true;
  }
  out.d_adj = task.t_cs > task.t_w ? out.d_exp + (task.t_cs - task.t_w) : out.d_exp;
  out.new_deadline =
      task.deadline_abs -
      static_cast<MicroTime>(std::llround(uncertainty * static_cast<double>(out.d_adj)));
  return out;
}

bool edf_feasible(std::vector<std::pair<MicroTime, MicroTime>> items, MicroTime now) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  MicroTime t = now;
  for (const auto& [remaining, deadline] : items) {
    t += remaining;
    if (t > deadline) return false;
  }
  return true;
}

bool edf_feasible(const WorkerQueue& queue, const OffloadTask& extra, MicroTime now) {
  std::vector<std::pair<MicroTime, MicroTime>> items;
  items.reserve(queue.tasks.size() + 1);
  for (const auto& t : queue.tasks) items.emplace_back(t.remaining(), t.deadline_abs);
  items.emplace_back(extra.remaining(), extra.deadline_abs);
  return edf_feasible(std::move(items), now);
}

FitHeuristic fit_from_string(const std::string& s) {
  if (s == "first-fit") return FitHeuristic::FirstFit;
  if (s == "best-fit") return FitHeuristic::BestFit;
  if (s == "worst-fit") return FitHeuristic::WorstFit;
  throw std::invalid_argument("unknown fit heuristic: " + s);
}

const char* to_string(FitHeuristic h) {
  switch (h) {
    case FitHeuristic::FirstFit: return "first-fit";
    case FitHeuristic::BestFit: return "best-fit";
    case FitHeuristic::WorstFit: return "worst-fit";
  }
  return "?";
}

std::optional<int> accept(const OffloadTask& task, const std::vector<WorkerQueue>& workers,
                          FitHeuristic heuristic, MicroTime now) {
  if (task.deadline_abs - now <= task.remaining()) return std::nullopt;

  std::optional<int> chosen;
  double chosen_density = 0;
  std::int64_t chosen_tie = 0;
  for (std::size_t i = 0; i < workers.size(); ++i) {
    if (!edf_feasible(workers[i], task, now)) continue;
    if (heuristic == FitHeuristic::FirstFit) return static_cast<int>(i);
    const double d = workers[i].total_density(now);
    bool better = false;
    if (!chosen) {
      better = true;
    } else if (d != chosen_density) {
      better = heuristic == FitHeuristic::WorstFit ? d < chosen_density : d > chosen_density;
    } else {
      better = workers[i].tie_break < chosen_tie;
    }
    if (better) {
      chosen = static_cast<int>(i);
      chosen_density = d;
      chosen_tie = workers[i].tie_break;
    }
  }
  return chosen;
}

void ClosestNodes::update(int node, MicroTime latency_us) {
  remove(node);
  ClosestEntry e{node, latency_us};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), e,
                             [](const ClosestEntry& a, const ClosestEntry& b) {
                               return a.latency_us < b.latency_us;
                             });
  entries_.insert(it, e);
  if (entries_.size() > 3) entries_.resize(3);
}

void ClosestNodes::remove(int node) {
  entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                [node](const ClosestEntry& e) { return e.node == node; }),
                 entries_.end());
}

std::optional<int> ClosestNodes::nth(std::size_t i) const {
  if (i >= entries_.size()) return std::nullopt;
  return entries_[i].node;
}

}  // namespace rtsim::offload
