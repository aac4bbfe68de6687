#pragma once

// Umbrella header.

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/io.hpp"
#include "mdspde/kolmogorov.hpp"
#include "mdspde/mdp_rate.hpp"
#include "mdspde/model.hpp"
#include "mdspde/occupation.hpp"
#include "mdspde/rare_event.hpp"
#include "mdspde/rng.hpp"
#include "mdspde/spectral.hpp"
#include "mdspde/stats.hpp"
#include "mdspde/version.hpp"
