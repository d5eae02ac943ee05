#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace phenotyper {

struct EmbeddedPoint {
  std::string subject_id;
  int visit = 0;
  Eigen::Vector2d y;
  int cluster = 0;
};

struct TrajectoryCell {
  double mean_distance = 0.0;
  long n_pairs = 0;
};

struct VisitPairSummary {
  int visit_from = 0;
  int visit_to = 0;
  // Keyed by (outcome group, cluster at the later visit).
  std::map<std::pair<int, int>, TrajectoryCell> by_group_cluster;
  Eigen::MatrixXd transitions;  // cluster(from) x cluster(to) counts
  long n_subjects = 0;
};

struct TrajectorySummary {
  std::vector<VisitPairSummary> pairs;  // (1->2), (2->3), ...
  long skipped_pairs = 0;               // subject missing one side of a pair
};

// Mean consecutive-visit displacement per (group, cluster). Cluster
// attribution uses the later visit's label; subjects absent from either
// visit of a pair are skipped and counted.
TrajectorySummary trajectory_distances(const std::vector<EmbeddedPoint>& points,
                                       const std::map<std::string, int>& groups, int n_visits,
                                       int n_clusters);

}  // namespace phenotyper
