#pragma once

#include "mdspde/averaging.hpp"
#include "mdspde/dynamics.hpp"
#include "mdspde/kolmogorov.hpp"
#include "mdspde/mdp_rate.hpp"
#include "mdspde/occupation.hpp"

#include <iosfwd>
#include <string>

namespace mdspde::io {

/// Round-trip decimal form (%.17g).
std::string format_double(double v);

/// Long format: t,component,mode,value. Components are X, Y, eta, Z, u1, u2;
/// modes are one based.
void write_paths_csv(std::ostream& os, const PathBundle& bundle);

/// Binary dump: magic "MDSPDEPB", u32 version, then named little-endian f64 blocks.
void write_paths_binary(std::ostream& os, const PathBundle& bundle);
PathBundle read_paths_binary(std::istream& is);

/// sample_index,mode,value
void write_invariant_csv(std::ostream& os, const InvariantSample& sample);

/// row,col,value,se (one based)
void write_psi2_csv(std::ostream& os, const Psi2Matrix& psi);

/// t,s,mode,y_value,u1_value,u2_value,weight for modes 1..modes.
void write_occupation_csv(std::ostream& os, const OccupationMeasure& occ, int modes);

/// t,mode,value
void write_smooth_path_csv(std::ostream& os, const SmoothPath& psi);

}  // namespace mdspde::io
