#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "octasam/image.hpp"
#include "octasam/rng.hpp"

namespace octasam {

enum class Task { RV, FAZ, Capillary, Artery, Vein };

std::string_view to_string(Task task);
/// Accepts the canonical names (RV, FAZ, capillary, artery, vein), case-insensitively.
/// Throws ConfigError for anything else.
Task parse_task(std::string_view name);
bool is_tubular(Task task);

enum class Fov { M3, M6, Other };

std::string_view to_string(Fov fov);
Fov parse_fov(std::string_view name);

/// One subject: stacked 3-channel en-face image plus its label masks.
struct OctaSample {
    std::string id;
    Image image;
    std::map<Task, Mask> labels;
    Fov fov = Fov::Other;
    std::string source;

    /// Throws ShapeError / DataError when an invariant does not hold.
    void validate() const;
    const Mask& label(Task task) const;
    bool has_label(Task task) const { return labels.contains(task); }
};

}  // namespace octasam

namespace octasam::dataio {

/// Spatial mapping between two pixel grids. `apply` maps source pixel-centre coordinates to
/// destination coordinates; `invert` maps back. The descriptive fields record how the
/// mapping was built; the affine matrix is the source of truth.
struct GeometricTransform {
    double scale = 1.0;
    int pad_left = 0;
    int pad_top = 0;
    bool flip_h = false;
    double rotation_deg = 0.0;
    int crop_left = 0;
    int crop_top = 0;

    int src_height = 0;
    int src_width = 0;
    int dst_height = 0;
    int dst_width = 0;

    Eigen::Matrix<double, 2, 3> forward = Eigen::Matrix<double, 2, 3>::Identity();

    PointF apply(PointF p) const;
    PointF invert(PointF p) const;
    /// Transform equivalent to applying *this and then `next`.
    GeometricTransform then(const GeometricTransform& next) const;
    bool is_identity() const;

    static GeometricTransform identity(int height, int width);
    /// Uniform scaling about the pixel grid origin followed by an integer offset.
    static GeometricTransform scale_pad(int src_h, int src_w, double scale, int dst_h, int dst_w,
                                        int pad_left = 0, int pad_top = 0);
    static GeometricTransform hflip(int height, int width);
    static GeometricTransform rotation(int height, int width, double degrees);
};

/// Bilinear resampling of every channel onto the destination grid of `t` (zero fill).
Image warp_image(const Image& image, const GeometricTransform& t);
/// Nearest-neighbour resampling; the value set of the mask is preserved (zero fill).
Mask warp_mask(const Mask& mask, const GeometricTransform& t);

/// Linear interpolation weights: row i samples a length-`src_len` signal at coords[i]
/// (clamped to the edge). Used to express resizing as a matrix product.
Eigen::MatrixXd sampling_matrix(const std::vector<double>& coords, int src_len);

/// Ordered selection of depth layers that become the three input channels.
struct LayerPolicy {
    std::vector<int> order;  // indices into the supplied layer list; empty = as supplied
};

/// Stack grayscale layers into a 3-channel image. Fewer than three selected layers are filled
/// by repeating the last one; more than three keeps the first three.
Image stack_layers(const std::vector<Eigen::MatrixXd>& layers, const LayerPolicy& policy = {});

struct PaddedImage {
    Image image;
    GeometricTransform transform;
};

/// Scale so the longer side equals `target_side` (aspect preserved), zero-pad right/bottom.
PaddedImage resize_and_pad(const Image& image, int target_side = 1024);

struct AugmentConfig {
    bool hflip = false;
    double hflip_p = 0.5;
    bool brightness_contrast = false;
    double brightness_limit = 0.2;
    double contrast_limit = 0.2;
    bool rotation = false;
    double max_rotation_deg = 10.0;

    static AugmentConfig all_enabled() { return {true, 0.5, true, 0.2, 0.2, true, 10.0}; }
};

struct Augmented {
    OctaSample sample;
    GeometricTransform transform;
};

/// Random flip/rotation applied identically to the image and every label mask,
/// brightness/contrast jitter applied to the image only.
Augmented augment(const OctaSample& sample, Rng& rng, const AugmentConfig& cfg);

struct Fold {
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
};

/// Shuffled k-fold partition; validation fold sizes differ by at most one.
std::vector<Fold> kfold_split(const std::vector<std::string>& sample_ids, int k, std::uint64_t seed);

struct CropResult {
    Image image;
    GeometricTransform transform;  // original coords -> resized crop coords
    double fraction = 1.0;
    int side = 0;
    int left = 0;
    int top = 0;
};

inline constexpr double kCropFractions[] = {0.25, 0.5, 0.75, 1.0};

/// Smallest fraction f of the image width with f*W >= the longer bbox side (1 if none fits).
double crop_fraction(int image_width, const BBox& bbox);

/// Square crop around a component's bbox (side = fraction * width), resized back to H x W.
CropResult crop_local(const Image& image, const BBox& bbox);

// ---------------------------------------------------------------- dataset loading

/// Where the rasters for one dataset live, relative to its root directory.
struct DatasetLayout {
    std::string name;
    Fov fov = Fov::Other;
    std::vector<std::string> layers;           // ordered layer directories
    LayerPolicy policy;
    std::map<Task, std::string> labels;        // task -> binary label directory
    std::optional<std::string> av_labels;      // class mask directory {0,1=artery,2=vein}

    static DatasetLayout from_json_file(const std::filesystem::path& path);
    static DatasetLayout from_json_string(const std::string& text);
    std::string to_json_string() const;
};

struct MissingLabel {
    std::string id;
    Task task;
};

struct LoadFailure {
    std::string id;
    std::filesystem::path file;
    std::string message;
};

struct LoadResult {
    std::vector<OctaSample> samples;  // sorted by id
    std::vector<MissingLabel> missing_labels;
    std::vector<LoadFailure> failures;
    std::vector<std::string> warnings;
};

/// Throws ConfigError if `root` does not exist.
LoadResult load_dataset(const std::filesystem::path& root, const DatasetLayout& layout);

}  // namespace octasam::dataio
