#include "octasam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "octasam/errors.hpp"

namespace octasam::metrics {

namespace {

void check_binary_pair(const Mask& pred, const Mask& gt) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ShapeError("metric inputs differ in shape");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared distance transform of sampled function f (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    int first = 0;
    while (first < n && f[first] == kInf) ++first;
    if (first == n) {
        std::fill(d.begin(), d.end(), kInf);
        return;
    }
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = first + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        const auto intersect = [&](int p) {
            return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
        };
        double s = intersect(v[k]);
        while (s <= z[k]) {  // z[0] is -inf, so k never drops below 0
            --k;
            s = intersect(v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / values.size();
    double var = 0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(var / values.size());
    return s;
}

}  // namespace

OverlapCounts overlap(const Mask& pred, const Mask& gt) {
    check_binary_pair(pred, gt);
    OverlapCounts c;
    const auto& p = pred.data();
    const auto& g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool a = p[i] != 0, b = g[i] != 0;
        c.pred += a;
        c.gt += b;
        c.intersection += a && b;
    }
    return c;
}

double dice_score(const OverlapCounts& c) {
    if (c.pred + c.gt == 0) return 1.0;
    return 2.0 * static_cast<double>(c.intersection) / static_cast<double>(c.pred + c.gt);
}

double jaccard_score(const OverlapCounts& c) {
    if (c.union_size() == 0) return 1.0;
    return static_cast<double>(c.intersection) / static_cast<double>(c.union_size());
}

double dice_score(const Mask& pred, const Mask& gt) { return dice_score(overlap(pred, gt)); }
double jaccard_score(const Mask& pred, const Mask& gt) { return jaccard_score(overlap(pred, gt)); }

Eigen::MatrixXd squared_distance_transform(const Mask& mask) {
    const int h = mask.height(), w = mask.width();
    Eigen::MatrixXd dist(h, w);
    const int n = std::max(h, w);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    // columns
    f.resize(h);
    d.resize(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = mask.at(y, x) ? 0.0 : kInf;
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) dist(y, x) = d[y];
    }
    // rows
    f.resize(w);
    d.resize(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f[x] = dist(y, x);
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) dist(y, x) = d[x];
    }
    return dist;
}

double directed_hausdorff(const Mask& from, const Mask& to) {
    check_binary_pair(from, to);
    if (from.count_nonzero() == 0 || to.count_nonzero() == 0) throw DataError("HD undefined: empty mask");
    const Eigen::MatrixXd d2 = squared_distance_transform(to);
    double worst = 0.0;
    for (int y = 0; y < from.height(); ++y)
        for (int x = 0; x < from.width(); ++x)
            if (from.at(y, x)) worst = std::max(worst, d2(y, x));
    return std::sqrt(worst);
}

double hausdorff(const Mask& pred, const Mask& gt) {
    return std::max(directed_hausdorff(pred, gt), directed_hausdorff(gt, pred));
}

Mask binarize(const Eigen::MatrixXd& soft, double threshold) { return Mask::from_soft(soft, threshold); }

SampleMetrics evaluate_sample(const std::string& id, int fold, const Mask& pred, const Mask& gt) {
    const OverlapCounts c = overlap(pred, gt);
    SampleMetrics m{id, fold, dice_score(c), jaccard_score(c), std::nullopt};
    if (c.pred > 0 && c.gt > 0) m.hd_px = hausdorff(pred, gt);
    return m;
}

MetricReport aggregate(const std::vector<SampleMetrics>& samples, const std::string& task, const std::string& dataset,
                       const std::string& fov) {
    MetricReport report;
    report.task = task;
    report.dataset = dataset;
    report.fov = fov;
    report.samples = samples;

    std::map<int, std::vector<const SampleMetrics*>> by_fold;
    for (const auto& s : samples) by_fold[s.fold].push_back(&s);

    std::vector<double> fold_dice, fold_jac, fold_hd;
    for (const auto& [fold, members] : by_fold) {
        FoldSummary fs;
        fs.fold = fold;
        std::vector<double> d, j, hd;
        for (const auto* s : members) {
            d.push_back(s->dice);
            j.push_back(s->jaccard);
            if (s->hd_px)
                hd.push_back(*s->hd_px);
            else
                ++fs.missing_hd;
        }
        fs.dice = summarize(d);
        fs.jaccard = summarize(j);
        fs.hd_px = summarize(hd);
        report.missing_hd += fs.missing_hd;
        fold_dice.push_back(fs.dice.mean);
        fold_jac.push_back(fs.jaccard.mean);
        if (fs.hd_px.count > 0) fold_hd.push_back(fs.hd_px.mean);
        report.folds.push_back(fs);
    }
    report.dice = summarize(fold_dice);
    report.jaccard = summarize(fold_jac);
    report.hd_px = summarize(fold_hd);
    return report;
}

namespace {
nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"n", s.count}}; }
}  // namespace

std::string MetricReport::to_records() const {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::json j{{"kind", "sample"}, {"id", s.id},        {"fold", s.fold},
                         {"dice", s.dice},   {"jaccard", s.jaccard}};
        j["hd_px"] = s.hd_px ? nlohmann::json(*s.hd_px) : nlohmann::json(nullptr);
        out += j.dump() + "\n";
    }
    for (const auto& f : folds)
        out += nlohmann::json{{"kind", "fold"},
                              {"fold", f.fold},
                              {"dice", summary_json(f.dice)},
                              {"jaccard", summary_json(f.jaccard)},
                              {"hd_px", summary_json(f.hd_px)},
                              {"missing_hd", f.missing_hd}}
                   .dump() +
               "\n";
    out += nlohmann::json{{"kind", "overall"},
                          {"task", task},
                          {"dataset", dataset},
                          {"fov", fov},
                          {"dice", summary_json(dice)},
                          {"jaccard", summary_json(jaccard)},
                          {"hd_px", summary_json(hd_px)},
                          {"missing_hd", missing_hd},
                          {"incomplete_folds", incomplete_folds}}
               .dump() +
           "\n";
    return out;
}

std::string MetricReport::to_table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %6s\n", "fold", "dice", "jaccard", "hd_px", "n");
    out << line;
    for (const auto& f : folds) {
        std::snprintf(line, sizeof line, "%-8d %8.4f %8.4f %8.4f %6d\n", f.fold, f.dice.mean, f.jaccard.mean,
                      f.hd_px.mean, f.dice.count);
        out << line;
    }
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %6d\n", "mean", dice.mean, jaccard.mean, hd_px.mean,
                  static_cast<int>(samples.size()));
    out << line;
    if (missing_hd > 0) out << "HD undefined for " << missing_hd << " sample(s)\n";
    if (!incomplete_folds.empty()) out << "incomplete folds: " << incomplete_folds.size() << "\n";
    return out.str();
}

}  // namespace octasam::metrics
