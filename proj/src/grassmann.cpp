#include "rsp/grassmann.hpp"

#include <cmath>

namespace rsp::grassmann {

double grassmann_distance(const FlatInput& p, const FlatInput& q) {
  if (p.d != q.d || p.k != q.k) throw ShapeError("grassmann_distance requires matching (d, k)");
  return qcore::trace_distance_herm(p.projector / p.k, q.projector / q.k);
}

double truncated_fidelity(double x, double y) {
  if (!(x >= 0.0) || !(y >= 0.0) || y > 1.0) throw DomainError("truncated_fidelity domain: x >= 0, y in [0, 1]");
  if (x > y) return 1.0;
  const double s = std::sqrt(x * y) + std::sqrt((1.0 - x) * (1.0 - y));
  return s * s;
}

RandomNet build_random_net(int d, int k, double eps, int confidence_budget, SeedStream& rng) {
  if (!(eps > 0.0) || eps > 1.0) throw DomainError("net radius must be in (0, 1]");
  if (confidence_budget < 1) throw DomainError("net budget must be >= 1");
  RandomNet net;
  net.d = d;
  net.k = k;
  net.target_radius = eps;
  net.budget = confidence_budget;
  net.points.reserve(confidence_budget);
  for (int i = 0; i < confidence_budget; ++i) net.points.push_back(qcore::sample_flat(d, k, rng));
  return net;
}

double net_coverage(const RandomNet& net, int probes, SeedStream& rng) {
  if (probes < 1) throw DomainError("probes must be >= 1");
  int hit = 0;
  for (int i = 0; i < probes; ++i) {
    const FlatInput probe = qcore::sample_flat(net.d, net.k, rng);
    for (const auto& q : net.points) {
      if (grassmann_distance(probe, q) <= net.target_radius) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / probes;
}

}  // namespace rsp::grassmann
