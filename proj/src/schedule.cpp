#include "vecmap/schedule.hpp"

#include <cmath>
#include <cstring>

#include "vecmap/geometry.hpp"

namespace vecmap {

double NoiseSchedule::at(int t) const {
  if (t < 0 || t > T) throw Error("timestep outside schedule");
  return alpha_bar(t);
}

std::uint64_t NoiseSchedule::fingerprint() const {
  // FNV-1a over T and the table bytes.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  mix(reinterpret_cast<const unsigned char*>(&T), sizeof(T));
  mix(reinterpret_cast<const unsigned char*>(alpha_bar.data()),
      sizeof(double) * static_cast<std::size_t>(alpha_bar.size()));
  return h;
}

NoiseSchedule build_cosine_schedule(int T) {
  if (T < 1) throw Error("schedule needs T >= 1");
  constexpr double s = 0.008;
  NoiseSchedule sched;
  sched.T = T;
  sched.alpha_bar.resize(T + 1);
  auto f = [&](double t) {
    const double arg = ((t / T + s) / (1.0 + s)) * M_PI / 2.0;
    const double c = std::cos(arg);
    return c * c;
  };
  const double f0 = f(0.0);
  for (int t = 0; t <= T; ++t) sched.alpha_bar(t) = f(static_cast<double>(t)) / f0;
  sched.alpha_bar(0) = 1.0;
  return sched;
}

}  // namespace vecmap
