#pragma once

#include <Eigen/Core>

namespace qens {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Read-only view of one input window: rows are consecutive hours, columns
/// are features.
using WindowRef = Eigen::Ref<const RowMatrix>;

} // namespace qens
