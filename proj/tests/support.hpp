#pragma once

// Scaffolding shared by the suites: error-code capture and literal builders.

#include <Eigen/Dense>
#include <initializer_list>
#include <optional>
#include <utility>

#include "imave/error.hpp"

namespace testsupport {

// Runs f and reports the imave error code it threw (nullopt: no throw).
template <typename F>
std::optional<imave::ErrorCode> thrown_code(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const imave::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Eigen::VectorXi veci(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

}  // namespace testsupport
