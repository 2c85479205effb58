#pragma once

#include <optional>
#include <string_view>

#include <Eigen/Core>

#include "octasam/dataio.hpp"

namespace octasam::losses {

/// H x W soft mask with values in [0,1].
using SoftMask = Eigen::MatrixXd;

/// Smoothing constant shared by the Dice and clDice ratios.
inline constexpr double kEpsilon = 1e-6;

struct SkeletonConfig {
    int iterations = 3;
    int window = 3;  // odd pooling window

    void validate() const;
    /// 3 iterations up to 400 px, 10 for larger (encoder-resolution) inputs.
    static SkeletonConfig for_side(int side);
};

/// Loss value together with its gradient with respect to the prediction.
struct LossValue {
    double value = 0.0;
    Eigen::MatrixXd grad;
};

/// 1 - (2|P.G| + eps) / (|P| + |G| + eps).
double dice_loss(const SoftMask& pred, const SoftMask& gt);
LossValue dice_loss_grad(const SoftMask& pred, const SoftMask& gt);

/// Iterated min/max-pool skeleton: erode with a cross, open with a square window,
/// accumulate the opening residual.
SoftMask soft_skeleton(const SoftMask& mask, const SkeletonConfig& cfg);
/// Vector-Jacobian product of soft_skeleton at `mask` with `upstream`.
Eigen::MatrixXd soft_skeleton_vjp(const SoftMask& mask, const SkeletonConfig& cfg, const Eigen::MatrixXd& upstream);

struct ClDiceTerms {
    double tprec = 0.0;
    double tsens = 0.0;
    double value = 0.0;
};

/// Topological precision/sensitivity and the clDice loss. When `gt_skeleton` is supplied
/// (datasets with centre-line labels) the ground-truth skeleton is not recomputed.
ClDiceTerms cl_dice_terms(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                          const std::optional<SoftMask>& gt_skeleton = std::nullopt);
double cl_dice_loss(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                    const std::optional<SoftMask>& gt_skeleton = std::nullopt);
LossValue cl_dice_loss_grad(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                            const std::optional<SoftMask>& gt_skeleton = std::nullopt);

struct LossWeights {
    double dice = 0.8;
    double cl_dice = 0.2;
};

/// weights.dice * dice_loss + weights.cl_dice * cl_dice_loss. Warns when the weights do not sum to 1.
double combined_loss(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                     const LossWeights& weights = {}, const std::optional<SoftMask>& gt_skeleton = std::nullopt);
LossValue combined_loss_grad(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                             const LossWeights& weights = {},
                             const std::optional<SoftMask>& gt_skeleton = std::nullopt);

enum class LossKind { Dice, Combined };

std::string_view to_string(LossKind kind);

/// FAZ and capillary train on Dice; RV, artery and vein on the Dice/clDice combination.
LossKind loss_for_task(Task task);
LossKind loss_for_task(std::string_view task);

/// A configured objective for one task.
struct TaskLoss {
    LossKind kind = LossKind::Combined;
    SkeletonConfig skeleton;
    LossWeights weights;

    LossValue operator()(const SoftMask& pred, const SoftMask& gt,
                         const std::optional<SoftMask>& gt_skeleton = std::nullopt) const;
};

}  // namespace octasam::losses
