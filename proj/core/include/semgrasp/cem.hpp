#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "semgrasp/critic.hpp"
#include "semgrasp/sim.hpp"

namespace semgrasp {

struct CEMConfig {
    int population = 64;
    int elites = 6;
    int iterations = 3;
    std::vector<double> init_mean;    // one entry per action dimension
    std::vector<double> init_stddev;
    std::vector<double> lo, hi;       // action box; samples clamp to it
    double stddev_floor = 1e-3;

    void validate() const;
};

struct CEMIterStat {
    double best_so_far = 0.0;  // best score seen up to and including this iteration
    double iter_best = 0.0;    // best score within this iteration
    std::vector<double> mean, stddev;
};

struct CEMResult {
    std::vector<double> best;
    double best_score = 0.0;
    std::vector<CEMIterStat> trace;
    int evals = 0;
};

using BatchScoreFn =
    std::function<void(const std::vector<std::vector<double>>&, std::vector<double>&)>;
/// Test hook: replaces Gaussian sampling for one iteration (used to drive the
/// optimizer over an exact grid).
using SamplerFn = std::function<void(int iteration, Rng&, std::vector<std::vector<double>>&)>;

/// Iterated sample / elite / refit search over a bounded action box with a
/// diagonal Gaussian, truncated by clamping. Returns the best sample ever
/// scored. Deterministic given the rng state.
CEMResult cem_optimize(const BatchScoreFn& score_fn, const CEMConfig& cfg, Rng& rng,
                       const SamplerFn* sampler = nullptr);

// ---------------------------------------------------------------------------

struct ServoConfig {
    int steps = 4;           // T
    int cem_iterations = 3;  // CEM iterations per step
    int cem_population = 64;
    int hover_pose_count = 5;
    bool smoothing = true;        // ventral smoothing at score time
    bool hover_approach = true;   // false: random approach pose (collection)
    std::array<float, 3> max_step = {0.25f, 0.25f, 1.5707963267948966f};

    /// Offline collection profile: T=10, 2 CEM iterations, random approach.
    static ServoConfig collection();
    /// Inference profile: T=4, 3 CEM iterations, hover-pose approach.
    static ServoConfig inference();

    CEMConfig cem() const;
};

enum class PolicyKind { random, dorsal_only, semantic, oracle };
const char* policy_name(PolicyKind k);
PolicyKind policy_from_name(const std::string& s);

enum class LabelSource { none, ground_truth, single_class_bin, rater_consensus, propagated };
const char* label_source_name(LabelSource s);
LabelSource label_source_from_name(const std::string& s);
/// Precedence when labels collide; higher wins, `none` lowest.
int label_source_rank(LabelSource s);

struct EpisodeStep {
    Image image;  // I_t at decision time (gripper visible)
    Action action{};
    float best_score = 0.f;  // CEM diagnostic
    int cem_evals = 0;
};

struct Episode {
    uint64_t seed = 0;
    PolicyKind policy = PolicyKind::random;
    Image initial_image;  // I_0, recorded before the gripper enters the scene
    std::vector<EpisodeStep> steps;
    GraspOutcome outcome;
    bool auto_label = false;  // image-delta success label
    std::optional<Image> present_image;
    std::optional<int> class_label;
    LabelSource label_source = LabelSource::none;
    std::optional<int> target_class;
};

struct EpisodeResult {
    Episode episode;
    WorldState final_world;
};

/// Per-step scoring interface used by the servo loop; lets the evaluation
/// harness wrap the dorsal stream with extra constraints.
class ActionObjective {
public:
    virtual ~ActionObjective() = default;
    virtual void begin_step(const Image& I0, const Image& It, const GripperPose& gripper) = 0;
    virtual void score(const std::vector<Action>& candidates, std::vector<float>& out) = 0;
};

/// Scores actions with a critic: the dorsal head alone, or the full
/// target-class score for semantic servoing.
class CriticObjective : public ActionObjective {
public:
    CriticObjective(const CriticModel& model, std::optional<int> target_class, bool smoothing);
    void begin_step(const Image& I0, const Image& It, const GripperPose& gripper) override;
    void score(const std::vector<Action>& candidates, std::vector<float>& out) override;

private:
    CriticScorer scorer_;
    std::optional<int> target_class_;
    bool smoothing_;
};

/// Picks the best of `hover_pose_count` poses equally spaced along the bin's
/// x axis at mid height: each pose is scored by the optimized value of the
/// objective from that pose; ties break to the lowest index.
GripperPose select_hover_pose(const Simulator& sim, const WorldState& world, ActionObjective& objective,
                              const ServoConfig& servo, Rng& rng, int* chosen_index = nullptr);

/// Runs one grasp attempt: approach, T servo steps, gripper close, outcome
/// and labels. Deterministic given the seed. `objective_override` and
/// `approach_override` support baseline policies built on the dorsal stream.
EpisodeResult run_episode(const Simulator& sim, PolicyKind kind, const CriticModel* model,
                          const WorldState& start, std::optional<int> target_class,
                          const ServoConfig& servo, uint64_t seed,
                          ActionObjective* objective_override = nullptr,
                          const GripperPose* approach_override = nullptr);

}  // namespace semgrasp
