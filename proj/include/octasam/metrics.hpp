#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "octasam/image.hpp"

namespace octasam::metrics {

struct OverlapCounts {
    std::int64_t intersection = 0;
    std::int64_t pred = 0;
    std::int64_t gt = 0;
    std::int64_t union_size() const { return pred + gt - intersection; }
};

OverlapCounts overlap(const Mask& pred, const Mask& gt);

/// 2|P∩G| / (|P|+|G|); two empty masks score 1.
double dice_score(const Mask& pred, const Mask& gt);
double dice_score(const OverlapCounts& c);
/// |P∩G| / |P∪G|; two empty masks score 1.
double jaccard_score(const Mask& pred, const Mask& gt);
double jaccard_score(const OverlapCounts& c);

/// Exact squared Euclidean distance from every pixel to the nearest foreground pixel of
/// `mask` (separable lower-envelope transform). Background-only masks yield +inf.
Eigen::MatrixXd squared_distance_transform(const Mask& mask);

/// max over `from` foreground of the distance to the nearest `to` foreground pixel.
double directed_hausdorff(const Mask& from, const Mask& to);

/// Symmetric Hausdorff distance in pixels over full foreground sets.
/// Throws DataError("HD undefined") when either mask is empty.
double hausdorff(const Mask& pred, const Mask& gt);

/// Threshold a soft mask (> threshold is foreground).
Mask binarize(const Eigen::MatrixXd& soft, double threshold = 0.5);

struct SampleMetrics {
    std::string id;
    int fold = 0;
    double dice = 0.0;
    double jaccard = 0.0;
    std::optional<double> hd_px;  // missing when undefined (an empty mask)
};

SampleMetrics evaluate_sample(const std::string& id, int fold, const Mask& pred, const Mask& gt);

struct Summary {
    double mean = 0.0;
    double std = 0.0;
    int count = 0;
};

struct FoldSummary {
    int fold = 0;
    Summary dice;
    Summary jaccard;
    Summary hd_px;
    int missing_hd = 0;
};

struct MetricReport {
    std::string task;
    std::string dataset;
    std::string fov;
    std::vector<SampleMetrics> samples;
    std::vector<FoldSummary> folds;
    // mean of the fold means; std across fold means
    Summary dice;
    Summary jaccard;
    Summary hd_px;
    int missing_hd = 0;
    std::vector<int> incomplete_folds;

    /// One JSON object per line: samples, then folds, then an overall record.
    std::string to_records() const;
    /// Fixed-width table for terminals.
    std::string to_table() const;
};

/// Per-fold means over samples, then the mean over folds. Samples without HD are excluded
/// from the HD statistics and counted.
MetricReport aggregate(const std::vector<SampleMetrics>& samples, const std::string& task = {},
                       const std::string& dataset = {}, const std::string& fov = {});

}  // namespace octasam::metrics
