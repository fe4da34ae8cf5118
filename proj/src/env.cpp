#include "m3fc/env.hpp"

namespace m3fc {

int Env::minor_state_index(const double*) const {
  throw InvalidArgument("environment has no finite minor state space");
}

MeanFieldHist Env::mean_field(const SystemState& s) const {
  return histogram(std::span<const double>(s.minors), s.minor_dim,
                   spec().obs_grid);
}

}  // namespace m3fc
