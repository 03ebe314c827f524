#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qens/types.hpp"

namespace qens {

enum class Split { Train, Validation, Test };

/**
 * @brief Supervised windows over a standardized feature matrix.
 *
 * Window i holds rows [target_rows[i] - sequence_length, target_rows[i]) of
 * the source matrix; targets[i] is the temperature column at target_rows[i].
 */
struct WindowedDataset {
    std::size_t sequence_length{0};
    std::size_t n_features{0};
    std::vector<double> inputs; // [N][sequence_length][n_features]
    std::vector<double> targets;
    std::vector<std::size_t> target_rows;
    Split split{Split::Train};

    [[nodiscard]] std::size_t size() const { return targets.size(); }
    [[nodiscard]] bool empty() const { return targets.empty(); }

    [[nodiscard]] Eigen::Map<const RowMatrix> window(std::size_t i) const {
        const std::size_t stride = sequence_length * n_features;
        return {inputs.data() + i * stride,
                static_cast<Eigen::Index>(sequence_length),
                static_cast<Eigen::Index>(n_features)};
    }

    /// Windows whose target row falls in [row_begin, row_end).
    [[nodiscard]] WindowedDataset select_rows(std::size_t row_begin,
                                              std::size_t row_end,
                                              Split tag) const {
        WindowedDataset out;
        out.sequence_length = sequence_length;
        out.n_features = n_features;
        out.split = tag;
        const std::size_t stride = sequence_length * n_features;
        for (std::size_t i = 0; i < size(); ++i) {
            if (target_rows[i] >= row_begin && target_rows[i] < row_end) {
                out.inputs.insert(out.inputs.end(),
                                  inputs.begin() + static_cast<long>(i * stride),
                                  inputs.begin() +
                                      static_cast<long>((i + 1) * stride));
                out.targets.push_back(targets[i]);
                out.target_rows.push_back(target_rows[i]);
            }
        }
        return out;
    }
};

} // namespace qens
