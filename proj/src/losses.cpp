#include "octasam/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "octasam/errors.hpp"
#include "octasam/log.hpp"

namespace octasam::losses {

namespace {

void check_shapes(const SoftMask& a, const SoftMask& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Pooling result plus, for every output pixel, the flat (column-major) index of the input
// pixel that produced it. Windows are clipped at the border.
struct Pooled {
    Eigen::MatrixXd value;
    std::vector<Eigen::Index> source;
};

Pooled erode(const Eigen::MatrixXd& x, int half) {
    const auto h = x.rows(), w = x.cols();
    Pooled out{Eigen::MatrixXd(h, w), std::vector<Eigen::Index>(static_cast<std::size_t>(x.size()))};
    for (Eigen::Index c = 0; c < w; ++c)
        for (Eigen::Index r = 0; r < h; ++r) {
            // min over the vertical window, then over the horizontal window; ties keep the first
            Eigen::Index best = r + c * h;
            double v = x(r, c);
            for (Eigen::Index rr = std::max<Eigen::Index>(0, r - half); rr <= std::min(h - 1, r + half); ++rr)
                if (x(rr, c) < v) {
                    v = x(rr, c);
                    best = rr + c * h;
                }
            for (Eigen::Index cc = std::max<Eigen::Index>(0, c - half); cc <= std::min(w - 1, c + half); ++cc)
                if (x(r, cc) < v) {
                    v = x(r, cc);
                    best = r + cc * h;
                }
            out.value(r, c) = v;
            out.source[static_cast<std::size_t>(r + c * h)] = best;
        }
    return out;
}

Pooled dilate(const Eigen::MatrixXd& x, int half) {
    const auto h = x.rows(), w = x.cols();
    Pooled out{Eigen::MatrixXd(h, w), std::vector<Eigen::Index>(static_cast<std::size_t>(x.size()))};
    for (Eigen::Index c = 0; c < w; ++c)
        for (Eigen::Index r = 0; r < h; ++r) {
            Eigen::Index best = r + c * h;
            double v = x(r, c);
            for (Eigen::Index cc = std::max<Eigen::Index>(0, c - half); cc <= std::min(w - 1, c + half); ++cc)
                for (Eigen::Index rr = std::max<Eigen::Index>(0, r - half); rr <= std::min(h - 1, r + half); ++rr)
                    if (x(rr, cc) > v) {
                        v = x(rr, cc);
                        best = rr + cc * h;
                    }
            out.value(r, c) = v;
            out.source[static_cast<std::size_t>(r + c * h)] = best;
        }
    return out;
}

void scatter(const std::vector<Eigen::Index>& source, const Eigen::MatrixXd& g, Eigen::MatrixXd& into) {
    for (Eigen::Index i = 0; i < g.size(); ++i) into.data()[source[static_cast<std::size_t>(i)]] += g.data()[i];
}

struct Opening {
    Pooled eroded;
    Pooled dilated;
};

Opening open(const Eigen::MatrixXd& x, int half) {
    Opening o{erode(x, half), {}};
    o.dilated = dilate(o.eroded.value, half);
    return o;
}

// d(open(x)) backprop of g into `into`
void open_backward(const Opening& o, const Eigen::MatrixXd& g, Eigen::MatrixXd& into) {
    Eigen::MatrixXd g_eroded = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    scatter(o.dilated.source, g, g_eroded);
    scatter(o.eroded.source, g_eroded, into);
}

// Forward record of the skeleton iteration, enough to replay it backwards.
struct SkeletonTrace {
    std::vector<Pooled> erosions;   // erosions[j] produced level j+1 from level j
    std::vector<Opening> openings;  // per level
    std::vector<Eigen::MatrixXd> relu_active;  // residual relu masks per level
    std::vector<Eigen::MatrixXd> deltas;       // residual per level (levels >= 1)
    std::vector<Eigen::MatrixXd> skel_before;  // accumulated skeleton entering level j
    std::vector<Eigen::MatrixXd> merge_active; // relu masks of the accumulate step
    Eigen::MatrixXd skeleton;
};

SkeletonTrace trace_skeleton(const SoftMask& mask, const SkeletonConfig& cfg) {
    cfg.validate();
    const int half = cfg.window / 2;
    SkeletonTrace t;
    Eigen::MatrixXd level = mask;

    t.openings.push_back(open(level, half));
    Eigen::MatrixXd residual = level - t.openings.back().dilated.value;
    t.relu_active.push_back((residual.array() > 0).cast<double>().matrix());
    t.skeleton = residual.cwiseMax(0.0);
    t.deltas.emplace_back();
    t.skel_before.emplace_back();
    t.merge_active.emplace_back();

    for (int j = 1; j <= cfg.iterations; ++j) {
        t.erosions.push_back(erode(level, half));
        level = t.erosions.back().value;
        t.openings.push_back(open(level, half));
        residual = level - t.openings.back().dilated.value;
        t.relu_active.push_back((residual.array() > 0).cast<double>().matrix());
        Eigen::MatrixXd delta = residual.cwiseMax(0.0);
        const Eigen::MatrixXd merge = delta - t.skeleton.cwiseProduct(delta);
        t.skel_before.push_back(t.skeleton);
        t.merge_active.push_back((merge.array() > 0).cast<double>().matrix());
        t.skeleton += merge.cwiseMax(0.0);
        t.deltas.push_back(std::move(delta));
    }
    return t;
}

}  // namespace

void SkeletonConfig::validate() const {
    if (iterations < 1) throw ConfigError("skeleton iterations must be at least 1");
    if (window < 1 || window % 2 == 0) throw ConfigError("skeleton pooling window must be a positive odd integer");
}

SkeletonConfig SkeletonConfig::for_side(int side) { return {side <= 400 ? 3 : 10, 3}; }

double dice_loss(const SoftMask& pred, const SoftMask& gt) {
    check_shapes(pred, gt, "dice_loss");
    const double inter = pred.cwiseProduct(gt).sum();
    return 1.0 - (2.0 * inter + kEpsilon) / (pred.sum() + gt.sum() + kEpsilon);
}

LossValue dice_loss_grad(const SoftMask& pred, const SoftMask& gt) {
    check_shapes(pred, gt, "dice_loss");
    const double num = 2.0 * pred.cwiseProduct(gt).sum() + kEpsilon;
    const double den = pred.sum() + gt.sum() + kEpsilon;
    LossValue out;
    out.value = 1.0 - num / den;
    out.grad = -(2.0 * gt.array() * den - num).matrix() / (den * den);
    return out;
}

SoftMask soft_skeleton(const SoftMask& mask, const SkeletonConfig& cfg) { return trace_skeleton(mask, cfg).skeleton; }

Eigen::MatrixXd soft_skeleton_vjp(const SoftMask& mask, const SkeletonConfig& cfg, const Eigen::MatrixXd& upstream) {
    check_shapes(mask, upstream, "soft_skeleton_vjp");
    const SkeletonTrace t = trace_skeleton(mask, cfg);
    const auto levels = static_cast<int>(t.openings.size());  // iterations + 1

    Eigen::MatrixXd g_skel = upstream;
    Eigen::MatrixXd g_level = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
    for (int j = levels - 1; j >= 1; --j) {
        const auto& s = t.skel_before[j];
        const auto& d = t.deltas[j];
        const auto& m = t.merge_active[j];
        // skel_j = s + relu(d - s*d)
        const Eigen::MatrixXd g_delta = (g_skel.array() * m.array() * (1.0 - s.array())).matrix();
        g_skel = (g_skel.array() * (1.0 - m.array() * d.array())).matrix();
        // d = relu(level_j - open(level_j))
        const Eigen::MatrixXd g_res = g_delta.cwiseProduct(t.relu_active[j]);
        g_level += g_res;
        open_backward(t.openings[j], -g_res, g_level);
        // level_j = erode(level_{j-1})
        Eigen::MatrixXd g_prev = Eigen::MatrixXd::Zero(mask.rows(), mask.cols());
        scatter(t.erosions[j - 1].source, g_level, g_prev);
        g_level = std::move(g_prev);
    }
    const Eigen::MatrixXd g_res = g_skel.cwiseProduct(t.relu_active[0]);
    g_level += g_res;
    open_backward(t.openings[0], -g_res, g_level);
    return g_level;
}

ClDiceTerms cl_dice_terms(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                          const std::optional<SoftMask>& gt_skeleton) {
    check_shapes(pred, gt, "cl_dice_loss");
    if (gt_skeleton) check_shapes(*gt_skeleton, gt, "cl_dice_loss (ground-truth skeleton)");
    const SoftMask pred_skel = soft_skeleton(pred, cfg);
    const SoftMask gt_skel = gt_skeleton ? *gt_skeleton : soft_skeleton(gt, cfg);
    ClDiceTerms t;
    t.tprec = (pred_skel.cwiseProduct(gt).sum() + kEpsilon) / (pred_skel.sum() + kEpsilon);
    t.tsens = (gt_skel.cwiseProduct(pred).sum() + kEpsilon) / (gt_skel.sum() + kEpsilon);
    t.value = 1.0 - 2.0 * t.tprec * t.tsens / (t.tprec + t.tsens);
    return t;
}

double cl_dice_loss(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                    const std::optional<SoftMask>& gt_skeleton) {
    return cl_dice_terms(pred, gt, cfg, gt_skeleton).value;
}

LossValue cl_dice_loss_grad(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                            const std::optional<SoftMask>& gt_skeleton) {
    check_shapes(pred, gt, "cl_dice_loss");
    if (gt_skeleton) check_shapes(*gt_skeleton, gt, "cl_dice_loss (ground-truth skeleton)");
    const SoftMask pred_skel = soft_skeleton(pred, cfg);
    const SoftMask gt_skel = gt_skeleton ? *gt_skeleton : soft_skeleton(gt, cfg);

    const double prec_num = pred_skel.cwiseProduct(gt).sum() + kEpsilon;
    const double prec_den = pred_skel.sum() + kEpsilon;
    const double sens_num = gt_skel.cwiseProduct(pred).sum() + kEpsilon;
    const double sens_den = gt_skel.sum() + kEpsilon;
    const double tp = prec_num / prec_den, ts = sens_num / sens_den;
    const double sum = tp + ts;

    LossValue out;
    out.value = 1.0 - 2.0 * tp * ts / sum;
    const double dl_dtp = -2.0 * ts * ts / (sum * sum);
    const double dl_dts = -2.0 * tp * tp / (sum * sum);

    const Eigen::MatrixXd dtp_dskel = (gt.array() * prec_den - prec_num).matrix() / (prec_den * prec_den);
    out.grad = soft_skeleton_vjp(pred, cfg, dl_dtp * dtp_dskel) + (dl_dts / sens_den) * gt_skel;
    return out;
}

namespace {
void warn_weights(const LossWeights& w) {
    if (std::abs(w.dice + w.cl_dice - 1.0) > 1e-9)
        log::warn("combined loss weights sum to " + std::to_string(w.dice + w.cl_dice) + ", not 1");
}
}  // namespace

double combined_loss(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg, const LossWeights& weights,
                     const std::optional<SoftMask>& gt_skeleton) {
    warn_weights(weights);
    double v = weights.dice * dice_loss(pred, gt);
    if (weights.cl_dice != 0.0) v += weights.cl_dice * cl_dice_loss(pred, gt, cfg, gt_skeleton);
    return v;
}

LossValue combined_loss_grad(const SoftMask& pred, const SoftMask& gt, const SkeletonConfig& cfg,
                             const LossWeights& weights, const std::optional<SoftMask>& gt_skeleton) {
    warn_weights(weights);
    LossValue d = dice_loss_grad(pred, gt);
    LossValue out{weights.dice * d.value, weights.dice * d.grad};
    if (weights.cl_dice != 0.0) {
        LossValue c = cl_dice_loss_grad(pred, gt, cfg, gt_skeleton);
        out.value += weights.cl_dice * c.value;
        out.grad += weights.cl_dice * c.grad;
    }
    return out;
}

std::string_view to_string(LossKind kind) { return kind == LossKind::Dice ? "dice" : "combined"; }

LossKind loss_for_task(Task task) {
    switch (task) {
        case Task::FAZ:
        case Task::Capillary: return LossKind::Dice;
        case Task::RV:
        case Task::Artery:
        case Task::Vein: return LossKind::Combined;
    }
    throw ConfigError("unknown task");
}

LossKind loss_for_task(std::string_view task) { return loss_for_task(parse_task(task)); }

LossValue TaskLoss::operator()(const SoftMask& pred, const SoftMask& gt,
                               const std::optional<SoftMask>& gt_skeleton) const {
    if (kind == LossKind::Dice) return dice_loss_grad(pred, gt);
    return combined_loss_grad(pred, gt, skeleton, weights, gt_skeleton);
}

}  // namespace octasam::losses
