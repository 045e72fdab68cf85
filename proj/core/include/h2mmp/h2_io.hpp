#pragma once

#include <string>

#include "h2mmp/h2_matrix.hpp"

namespace h2mmp {

enum class ScalarKind { real, complex };

/// Serialize to the "h2json/1" container: cluster tree, block parameters,
/// bases and transfers as row-major arrays, couplings and full blocks.
/// Serialization is deterministic and value-exact (doubles survive the round
/// trip bit for bit).
template <class Scalar>
std::string h2_to_json(const H2Matrix<Scalar>& h);

template <class Scalar>
void save_h2(const H2Matrix<Scalar>& h, const std::string& path);

/// Scalar kind recorded in an h2json file, without loading the payload.
ScalarKind h2_file_scalar_kind(const std::string& path);

/// Load an "h2json/1" file. Throws LoadError (with a location where
/// available) on version mismatch, truncation, or inconsistent shapes; never
/// returns a partially populated matrix.
template <class Scalar>
H2Matrix<Scalar> load_h2(const std::string& path);

template <class Scalar>
H2Matrix<Scalar> h2_from_json(const std::string& text);

}  // namespace h2mmp
