#include "phenotyper/trajectory.hpp"

#include <cmath>

#include "phenotyper/errors.hpp"

namespace phenotyper {

TrajectorySummary trajectory_distances(const std::vector<EmbeddedPoint>& points,
                                       const std::map<std::string, int>& groups, int n_visits,
                                       int n_clusters) {
  std::map<std::pair<std::string, int>, const EmbeddedPoint*> by_key;
  for (const auto& p : points) {
    if (!by_key.emplace(std::make_pair(p.subject_id, p.visit), &p).second)
      throw ValidationError("trajectory: duplicate (subject, visit) point");
  }
  std::map<std::string, bool> subjects;
  for (const auto& p : points) subjects[p.subject_id] = true;

  TrajectorySummary out;
  for (int v = 1; v < n_visits; ++v) {
    VisitPairSummary pair;
    pair.visit_from = v;
    pair.visit_to = v + 1;
    pair.transitions = Eigen::MatrixXd::Zero(n_clusters, n_clusters);
    std::map<std::pair<int, int>, std::pair<double, long>> acc;
    for (const auto& [sid, _] : subjects) {
      const auto a = by_key.find({sid, v});
      const auto b = by_key.find({sid, v + 1});
      if (a == by_key.end() || b == by_key.end()) {
        out.skipped_pairs++;
        continue;
      }
      const double dist = (a->second->y - b->second->y).norm();
      const auto git = groups.find(sid);
      const int group = git == groups.end() ? -1 : git->second;
      auto& cell = acc[{group, b->second->cluster}];
      cell.first += dist;
      cell.second += 1;
      pair.transitions(a->second->cluster, b->second->cluster) += 1.0;
      pair.n_subjects++;
    }
    for (const auto& [key, cell] : acc)
      pair.by_group_cluster[key] = {cell.first / static_cast<double>(cell.second), cell.second};
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

}  // namespace phenotyper
