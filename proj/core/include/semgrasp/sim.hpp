#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "semgrasp/image.hpp"
#include "semgrasp/rng.hpp"

namespace semgrasp {

enum class ShapeKind { disk, bar, triangle, ring };
enum class InstancePool { train, test };

const char* shape_name(ShapeKind s);
const char* pool_name(InstancePool p);
InstancePool pool_from_name(const std::string& s);

constexpr int kNumClasses = 16;

/// One physical object. Class determines shape and base color (4 shapes x 4
/// colors); instances within a class vary in size and hue.
struct ObjectInstance {
    int id = 0;
    int class_id = 0;
    ShapeKind shape = ShapeKind::disk;
    float x = 0.f, y = 0.f;     // centroid, workspace [0,1]^2
    float theta = 0.f;          // orientation in [0, 2pi)
    float size = 0.05f;         // equivalent-disk radius, workspace units
    std::array<float, 3> color = {1.f, 1.f, 1.f};
};

struct GripperPose {
    float x = 0.5f, y = 0.5f;
    float phi = 0.f;  // vertical-axis rotation, [0, pi) by two-finger symmetry
};

struct GraspOutcome {
    bool success = false;
    std::vector<int> grasped_ids;
    std::vector<int> grasped_classes;
};

struct WorldState {
    std::vector<ObjectInstance> objects;
    GripperPose gripper;
    std::vector<int> removed;  // ids grasped away

    bool is_removed(int id) const {
        for (int r : removed)
            if (r == id) return true;
        return false;
    }
    int active_count() const { return int(objects.size() - removed.size()); }
};

struct SimConfig {
    int image_size = 64;
    float r_grasp = 0.06f;
    float theta_tol = 0.5235987755982988f;  // pi/6, bar alignment tolerance
    int delta_threshold = 20;               // changed-pixel count must exceed this
    float delta_channel_eps = 0.05f;
    float min_size = 0.04f;
    float max_size = 0.08f;
    bool multi_pick = false;
    int max_spawn_tries = 10000;
    int instances_per_class = 30;
    uint64_t catalog_seed = 17;  // instance catalogs are fixed per catalog seed
};

struct BinConfig {
    int count = 5;
    bool distinct_classes = true;  // evaluation mode: all classes differ
    InstancePool pool = InstancePool::train;
    int fixed_class = -1;  // >= 0: single-class bin of that class
};

/// Deterministic top-down 2D bin world: scene generation, rasterization,
/// kinematic gripper, grasp outcomes, and image-delta success labels.
class Simulator {
public:
    explicit Simulator(SimConfig cfg = {});

    const SimConfig& config() const { return cfg_; }

    WorldState spawn_scene(const BinConfig& bin, uint64_t seed) const;

    /// Rasterizes objects (and optionally the gripper marker) over a flat
    /// background with a 1px linear antialias band. Output is 8-bit
    /// quantized so in-memory pixels equal the PNG bytes.
    Image render(const WorldState& w, bool draw_gripper = true) const;

    /// Close-up of a single held object: centered, canonical magnification,
    /// orientation drawn from `rng`, plain background.
    Image render_present(const ObjectInstance& obj, Rng& rng) const;

    WorldState apply_action(const WorldState& w, const std::array<float, 3>& action) const;

    std::pair<GraspOutcome, WorldState> close_gripper(const WorldState& w) const;

    /// True iff the count of pixels whose max per-channel abs difference
    /// exceeds delta_channel_eps is strictly greater than delta_threshold.
    bool image_delta_label(const Image& before, const Image& after) const;
    int image_delta_count(const Image& before, const Image& after) const;

    /// Instance catalogs: a fixed roster per (pool, class) standing in for
    /// the physical train/test object split.
    ObjectInstance catalog_instance(InstancePool pool, int class_id, int index) const;
    ObjectInstance sample_instance(InstancePool pool, int class_id, Rng& rng) const;

    std::array<float, 2> workspace_to_pixel(float x, float y) const;
    std::array<float, 2> pixel_to_workspace(float px, float py) const;

    std::array<float, 3> background() const { return kBackground; }

    /// Circumscribed radius of a shape (bounding circle), used for
    /// non-overlap placement and render bounding boxes.
    static float outer_radius(ShapeKind shape, float size);

    static constexpr std::array<float, 3> kBackground = {0.12f, 0.12f, 0.14f};
    static constexpr std::array<float, 3> kGripperColor = {0.95f, 0.95f, 0.95f};

private:
    void draw_shape(Image& img, const ObjectInstance& obj, float cx, float cy, float scale) const;
    void draw_gripper_marker(Image& img, const GripperPose& g) const;

    SimConfig cfg_;
};

}  // namespace semgrasp
