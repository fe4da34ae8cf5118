#include "envs_all.hpp"

#include "m3fc/errors.hpp"

namespace m3fc {

std::unique_ptr<Env> make_env(const std::string& id, const EnvOverrides& ov) {
  if (id == "2g") return make_two_gaussians();
  if (id == "formation") return make_formation();
  if (id == "beach") return make_beach();
  if (id == "foraging") return make_foraging(ov.reward_scale);
  if (id == "potential") return make_potential();
  if (id == "toy3") return make_toy3();
  throw ConfigError("unknown environment id: " + id);
}

}  // namespace m3fc
