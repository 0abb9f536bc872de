#include "semgrasp/sim.hpp"

#include <algorithm>
#include <cmath>

#include "semgrasp/errors.hpp"

namespace semgrasp {

namespace {

constexpr float kPi = 3.14159265358979323846f;
constexpr float kTwoPi = 2.f * kPi;

// Base colors, one per color group; far apart so hue jitter keeps classes
// separable.
constexpr std::array<std::array<float, 3>, 4> kBaseColors = {{
    {0.85f, 0.16f, 0.16f},  // red
    {0.16f, 0.75f, 0.22f},  // green
    {0.22f, 0.38f, 0.90f},  // blue
    {0.90f, 0.80f, 0.16f},  // yellow
}};

ShapeKind class_shape(int class_id) { return ShapeKind(class_id / 4); }
int class_color(int class_id) { return class_id % 4; }

float wrap_phi(float phi) {
    float p = std::fmod(phi, kPi);
    if (p < 0.f) p += kPi;
    return p;
}

float wrap_theta(float t) {
    float p = std::fmod(t, kTwoPi);
    if (p < 0.f) p += kTwoPi;
    return p;
}

// Smallest angular mismatch between gripper phi and bar axis theta, mod pi.
float axis_mismatch(float phi, float theta) {
    float d = std::fmod(std::abs(phi - theta), kPi);
    return std::min(d, kPi - d);
}

struct ShapeGeom {
    // Bar/triangle/ring dimensions derived so every shape covers the same
    // area as a disk of the given equivalent radius.
    static float bar_half_width(float r) { return r * 0.54984f; }  // sqrt(pi/(4*2.6))
    static float bar_half_len(float r) { return 2.6f * bar_half_width(r); }
    static float tri_circumradius(float r) { return r * 1.55512f; }  // sqrt(4*pi/(3*sqrt(3)))
    static float ring_outer(float r) { return r * 1.15470f; }        // r/sqrt(0.75)
    static float ring_inner(float r) { return ring_outer(r) * 0.5f; }
};

// Signed distance, positive inside, workspace units. (dx,dy) is the point
// relative to the shape centroid.
float shape_sdf(ShapeKind shape, float size, float theta, float dx, float dy) {
    switch (shape) {
        case ShapeKind::disk:
            return size - std::sqrt(dx * dx + dy * dy);
        case ShapeKind::bar: {
            const float c = std::cos(theta), s = std::sin(theta);
            const float px = std::abs(c * dx + s * dy) - ShapeGeom::bar_half_len(size);
            const float py = std::abs(-s * dx + c * dy) - ShapeGeom::bar_half_width(size);
            const float ox = std::max(px, 0.f), oy = std::max(py, 0.f);
            const float outside = std::sqrt(ox * ox + oy * oy);
            const float inside = std::min(std::max(px, py), 0.f);
            return -(outside + inside);
        }
        case ShapeKind::triangle: {
            const float R = ShapeGeom::tri_circumradius(size);
            // intersection of three half planes; each edge lies R/2 from the
            // centroid, inward normal pointing at the opposite vertex
            float sd = 1e9f;
            for (int k = 0; k < 3; ++k) {
                const float ang = theta + kTwoPi * float(k) / 3.f;
                const float nx = std::cos(ang), ny = std::sin(ang);
                sd = std::min(sd, R * 0.5f + (nx * dx + ny * dy));
            }
            return sd;
        }
        case ShapeKind::ring: {
            const float d = std::sqrt(dx * dx + dy * dy);
            return std::min(ShapeGeom::ring_outer(size) - d, d - ShapeGeom::ring_inner(size));
        }
    }
    return -1e9f;
}

}  // namespace

const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::disk: return "disk";
        case ShapeKind::bar: return "bar";
        case ShapeKind::triangle: return "triangle";
        case ShapeKind::ring: return "ring";
    }
    return "?";
}

const char* pool_name(InstancePool p) { return p == InstancePool::train ? "train" : "test"; }

InstancePool pool_from_name(const std::string& s) {
    if (s == "train") return InstancePool::train;
    if (s == "test") return InstancePool::test;
    throw ConfigError("unknown instance pool: " + s);
}

float Simulator::outer_radius(ShapeKind shape, float size) {
    switch (shape) {
        case ShapeKind::disk: return size;
        case ShapeKind::bar: {
            const float hl = ShapeGeom::bar_half_len(size);
            const float hw = ShapeGeom::bar_half_width(size);
            return std::sqrt(hl * hl + hw * hw);
        }
        case ShapeKind::triangle: return ShapeGeom::tri_circumradius(size);
        case ShapeKind::ring: return ShapeGeom::ring_outer(size);
    }
    return size;
}

Simulator::Simulator(SimConfig cfg) : cfg_(cfg) {
    if (cfg_.image_size < 8) throw ConfigError("image_size must be >= 8");
    if (cfg_.min_size <= 0.f || cfg_.max_size < cfg_.min_size)
        throw ConfigError("invalid object size range");
}

ObjectInstance Simulator::catalog_instance(InstancePool pool, int class_id, int index) const {
    if (class_id < 0 || class_id >= kNumClasses) throw ConfigError("class_id out of range");
    if (index < 0 || index >= cfg_.instances_per_class) throw ConfigError("instance index out of range");
    Rng rng(derive_seed(cfg_.catalog_seed, uint64_t(pool == InstancePool::test ? 2 : 1),
                        uint64_t(class_id), uint64_t(index)));
    ObjectInstance obj;
    obj.class_id = class_id;
    obj.shape = class_shape(class_id);
    obj.size = float(rng.uniform(cfg_.min_size, cfg_.max_size));
    const auto& base = kBaseColors[size_t(class_color(class_id))];
    for (int c = 0; c < 3; ++c) {
        const float jitter = float(rng.uniform(-0.07, 0.07));
        obj.color[size_t(c)] = std::clamp(base[size_t(c)] + jitter, 0.05f, 0.98f);
    }
    return obj;
}

ObjectInstance Simulator::sample_instance(InstancePool pool, int class_id, Rng& rng) const {
    return catalog_instance(pool, class_id, int(rng.uniform_int(uint64_t(cfg_.instances_per_class))));
}

WorldState Simulator::spawn_scene(const BinConfig& bin, uint64_t seed) const {
    if (bin.count < 0) throw ConfigError("bin count must be >= 0");
    if (bin.distinct_classes && bin.fixed_class < 0 && bin.count > kNumClasses)
        throw ConfigError("cannot place more distinct classes than classes exist");
    Rng rng(derive_seed(seed, 0x5ce0e));
    WorldState w;
    w.gripper = GripperPose{0.5f, 0.5f, 0.f};

    std::vector<int> classes;
    if (bin.fixed_class >= 0) {
        classes.assign(size_t(bin.count), bin.fixed_class);
    } else if (bin.distinct_classes) {
        std::vector<int> all(kNumClasses);
        for (int i = 0; i < kNumClasses; ++i) all[size_t(i)] = i;
        rng.shuffle(all);
        classes.assign(all.begin(), all.begin() + bin.count);
    } else {
        for (int i = 0; i < bin.count; ++i) classes.push_back(int(rng.uniform_int(kNumClasses)));
    }

    int tries = 0;
    for (int i = 0; i < bin.count; ++i) {
        ObjectInstance obj = sample_instance(bin.pool, classes[size_t(i)], rng);
        obj.id = i;
        obj.theta = float(rng.uniform(0.0, double(kTwoPi)));
        const float margin = outer_radius(obj.shape, obj.size);
        for (;;) {
            if (++tries > cfg_.max_spawn_tries)
                throw Error("spawn_scene: could not place objects without overlap");
            obj.x = float(rng.uniform(margin, 1.0 - margin));
            obj.y = float(rng.uniform(margin, 1.0 - margin));
            bool ok = true;
            for (const auto& other : w.objects) {
                const float dx = obj.x - other.x, dy = obj.y - other.y;
                const float min_dist =
                    outer_radius(obj.shape, obj.size) + outer_radius(other.shape, other.size);
                if (dx * dx + dy * dy <= min_dist * min_dist) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
        }
        w.objects.push_back(obj);
    }
    return w;
}

void Simulator::draw_shape(Image& img, const ObjectInstance& obj, float cx, float cy,
                           float scale) const {
    const int n = cfg_.image_size;
    const float px_per_unit = float(n);
    const float reach = outer_radius(obj.shape, obj.size * scale) + 2.f / px_per_unit;
    const int x0 = std::max(0, int(std::floor((cx - reach) * px_per_unit - 0.5f)));
    const int x1 = std::min(n - 1, int(std::ceil((cx + reach) * px_per_unit - 0.5f)));
    const int y0 = std::max(0, int(std::floor((cy - reach) * px_per_unit - 0.5f)));
    const int y1 = std::min(n - 1, int(std::ceil((cy + reach) * px_per_unit - 0.5f)));
    for (int row = y0; row <= y1; ++row) {
        const float wy = (float(row) + 0.5f) / px_per_unit;
        for (int col = x0; col <= x1; ++col) {
            const float wx = (float(col) + 0.5f) / px_per_unit;
            const float sd =
                shape_sdf(obj.shape, obj.size * scale, obj.theta, wx - cx, wy - cy) * px_per_unit;
            const float alpha = std::clamp(sd + 0.5f, 0.f, 1.f);
            if (alpha <= 0.f) continue;
            float* px = img.at(row, col);
            for (int c = 0; c < 3; ++c) px[c] = px[c] * (1.f - alpha) + obj.color[size_t(c)] * alpha;
        }
    }
}

void Simulator::draw_gripper_marker(Image& img, const GripperPose& g) const {
    const int n = cfg_.image_size;
    const float px_per_unit = float(n);
    // two finger dots perpendicular to the closing axis
    const float off = 0.030f;
    const float dot_r = 0.016f;
    const float ox = -std::sin(g.phi) * off, oy = std::cos(g.phi) * off;
    for (int k = -1; k <= 1; k += 2) {
        const float cx = g.x + float(k) * ox, cy = g.y + float(k) * oy;
        const float reach = dot_r + 2.f / px_per_unit;
        const int x0 = std::max(0, int(std::floor((cx - reach) * px_per_unit - 0.5f)));
        const int x1 = std::min(n - 1, int(std::ceil((cx + reach) * px_per_unit - 0.5f)));
        const int y0 = std::max(0, int(std::floor((cy - reach) * px_per_unit - 0.5f)));
        const int y1 = std::min(n - 1, int(std::ceil((cy + reach) * px_per_unit - 0.5f)));
        for (int row = y0; row <= y1; ++row) {
            const float wy = (float(row) + 0.5f) / px_per_unit;
            for (int col = x0; col <= x1; ++col) {
                const float wx = (float(col) + 0.5f) / px_per_unit;
                const float dx = wx - cx, dy = wy - cy;
                const float sd = (dot_r - std::sqrt(dx * dx + dy * dy)) * px_per_unit;
                const float alpha = std::clamp(sd + 0.5f, 0.f, 1.f);
                if (alpha <= 0.f) continue;
                float* px = img.at(row, col);
                for (int c = 0; c < 3; ++c)
                    px[c] = px[c] * (1.f - alpha) + kGripperColor[size_t(c)] * alpha;
            }
        }
    }
}

Image Simulator::render(const WorldState& w, bool draw_gripper) const {
    Image img(cfg_.image_size, cfg_.image_size);
    for (int i = 0; i < cfg_.image_size * cfg_.image_size; ++i)
        for (int c = 0; c < 3; ++c) img.pixels[size_t(3 * i + c)] = kBackground[size_t(c)];
    for (const auto& obj : w.objects) {
        if (w.is_removed(obj.id)) continue;
        draw_shape(img, obj, obj.x, obj.y, 1.f);
    }
    if (draw_gripper) draw_gripper_marker(img, w.gripper);
    quantize8(img);
    return img;
}

Image Simulator::render_present(const ObjectInstance& obj, Rng& rng) const {
    Image img(cfg_.image_size, cfg_.image_size);
    for (int i = 0; i < cfg_.image_size * cfg_.image_size; ++i)
        for (int c = 0; c < 3; ++c) img.pixels[size_t(3 * i + c)] = kBackground[size_t(c)];
    ObjectInstance centered = obj;
    centered.theta = float(rng.uniform(0.0, double(kTwoPi)));
    // canonical magnification: equivalent radius 0.22 of the frame
    const float scale = 0.22f / obj.size;
    centered.x = 0.5f;
    centered.y = 0.5f;
    draw_shape(img, centered, 0.5f, 0.5f, scale);
    quantize8(img);
    return img;
}

WorldState Simulator::apply_action(const WorldState& w, const std::array<float, 3>& action) const {
    for (float a : action)
        if (!std::isfinite(a)) throw NumericError("apply_action: non-finite action component");
    WorldState out = w;
    out.gripper.x = std::clamp(w.gripper.x + action[0], 0.f, 1.f);
    out.gripper.y = std::clamp(w.gripper.y + action[1], 0.f, 1.f);
    out.gripper.phi = wrap_phi(w.gripper.phi + action[2]);
    return out;
}

std::pair<GraspOutcome, WorldState> Simulator::close_gripper(const WorldState& w) const {
    struct Cand {
        float dist;
        int id;
        int class_id;
    };
    std::vector<Cand> cands;
    for (const auto& obj : w.objects) {
        if (w.is_removed(obj.id)) continue;
        const float dx = obj.x - w.gripper.x, dy = obj.y - w.gripper.y;
        const float dist = std::sqrt(dx * dx + dy * dy);
        if (dist > cfg_.r_grasp) continue;
        if (obj.shape == ShapeKind::bar &&
            axis_mismatch(w.gripper.phi, wrap_theta(obj.theta)) > cfg_.theta_tol)
            continue;
        cands.push_back({dist, obj.id, obj.class_id});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
    });
    const size_t take =
        cfg_.multi_pick ? std::min<size_t>(2, cands.size()) : std::min<size_t>(1, cands.size());
    GraspOutcome outcome;
    WorldState out = w;
    for (size_t i = 0; i < take; ++i) {
        outcome.grasped_ids.push_back(cands[i].id);
        outcome.grasped_classes.push_back(cands[i].class_id);
        out.removed.push_back(cands[i].id);
    }
    outcome.success = !outcome.grasped_ids.empty();
    return {outcome, out};
}

int Simulator::image_delta_count(const Image& before, const Image& after) const {
    if (before.height != after.height || before.width != after.width)
        throw ShapeError("image_delta: dimension mismatch");
    int count = 0;
    const size_t n = size_t(before.height) * size_t(before.width);
    for (size_t i = 0; i < n; ++i) {
        float m = 0.f;
        for (int c = 0; c < 3; ++c)
            m = std::max(m,
                         std::abs(before.pixels[3 * i + size_t(c)] - after.pixels[3 * i + size_t(c)]));
        if (m > cfg_.delta_channel_eps) ++count;
    }
    return count;
}

bool Simulator::image_delta_label(const Image& before, const Image& after) const {
    return image_delta_count(before, after) > cfg_.delta_threshold;
}

std::array<float, 2> Simulator::workspace_to_pixel(float x, float y) const {
    const float s = float(cfg_.image_size);
    return {x * s - 0.5f, y * s - 0.5f};
}

std::array<float, 2> Simulator::pixel_to_workspace(float px, float py) const {
    const float s = float(cfg_.image_size);
    return {(px + 0.5f) / s, (py + 0.5f) / s};
}

}  // namespace semgrasp
