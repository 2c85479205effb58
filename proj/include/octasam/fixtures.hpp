#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "octasam/dataio.hpp"

namespace octasam::fixtures {

// Synthetic OCTA-like subjects: a few vessel trees entering from the border, a vessel-free
// disc in the centre (FAZ) and short capillary strokes. Trees alternate artery/vein.
struct FixtureConfig {
    int size = 64;
    int count = 8;
    std::uint64_t seed = 1;
    Fov fov = Fov::M3;
    int trees = 3;
    double vessel_radius = 0.0;  // 0 = derive from size
    double noise = 0.04;
};

struct SyntheticSubject {
    std::string id;
    std::vector<Eigen::MatrixXd> layers;  // three grayscale projections
    Mask rv;
    Mask faz;
    Mask capillary;
    Mask artery_vein;  // 0 background, 1 artery, 2 vein
};

SyntheticSubject make_subject(const FixtureConfig& cfg, Rng& rng, std::string id);

OctaSample to_sample(const SyntheticSubject& subject, Fov fov);

std::vector<OctaSample> make_dataset(const FixtureConfig& cfg);

/// Directory names used by `write_tree` and the matching layout descriptor.
dataio::DatasetLayout fixture_layout(Fov fov);

/// Writes layers, labels and `layout.json` under `root`. Subjects listed in
/// `omit_rv_for` get no RV label file (for missing-label tests).
void write_tree(const std::filesystem::path& root, const FixtureConfig& cfg,
                const std::vector<std::string>& omit_rv_for = {});

}  // namespace octasam::fixtures
