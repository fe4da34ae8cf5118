#pragma once

#include <memory>

#include "m3fc/env.hpp"

namespace m3fc {

std::unique_ptr<Env> make_two_gaussians();
std::unique_ptr<Env> make_formation();
std::unique_ptr<Env> make_beach();
std::unique_ptr<Env> make_foraging(double reward_scale);
std::unique_ptr<Env> make_potential();
std::unique_ptr<Env> make_toy3();

}  // namespace m3fc
