#pragma once

#include <vector>

#include "rsp/qcore.hpp"

namespace rsp::grassmann {

using qcore::FlatInput;

/// Trace distance between the flat states P/k and Q/k; the metric on
/// G(d, k). In [0, 1].
double grassmann_distance(const FlatInput& p, const FlatInput& q);

/// Binary-distribution fidelity (sqrt(xy) + sqrt((1-x)(1-y)))^2 for
/// x <= y, truncated to 1 for x > y. Accepts x >= 0, y in [0, 1].
double truncated_fidelity(double x, double y);

/// A batch of i.i.d. Haar points standing in for a minimal eps-net. No
/// covering guarantee is made; callers measure coverage empirically.
struct RandomNet {
  int d = 0;
  int k = 0;
  std::vector<FlatInput> points;
  double target_radius = 0.0;
  int budget = 0;
};

RandomNet build_random_net(int d, int k, double eps, int confidence_budget, SeedStream& rng);

/// Fraction of `probes` fresh Haar samples lying within target_radius of
/// some net point.
double net_coverage(const RandomNet& net, int probes, SeedStream& rng);

}  // namespace rsp::grassmann
