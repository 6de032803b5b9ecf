#pragma once

#include <string>

#include "mflow/grid.hpp"

namespace mflow {

/// Shortest round-trip decimal formatting; byte-stable across runs.
std::string format_double(double v);

/// MFLO binary layout (little-endian):
///   "MFLO" | u32 version | u32 d | u32 ncomp | u32 n[d]
///   | f64 lo[d], hi[d] | f64 values[ncomp * prod(n)] (row-major per component)
void write_mflo(const std::string& path, const ScalarGridField& f);
void write_mflo(const std::string& path, const VectorGridField& f);
ScalarGridField read_mflo_scalar(const std::string& path);
VectorGridField read_mflo_vector(const std::string& path);

/// CSV with header x1,...,xd,value (scalar) or x1,...,xd,v1,...,vd (vector).
void write_csv(const std::string& path, const ScalarGridField& f);
void write_csv(const std::string& path, const VectorGridField& f);

}  // namespace mflow
