#include "ogpssm/sim_envs.hpp"
