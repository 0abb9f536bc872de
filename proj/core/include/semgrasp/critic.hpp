#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "semgrasp/graph.hpp"
#include "semgrasp/image.hpp"
#include "semgrasp/sim.hpp"

namespace semgrasp {

using Action = std::array<float, 3>;  // (dx, dy, dphi)

enum class CriticVariant { single_stream, two_branch, separated };
enum class VentralTrunk { plain_cnn, keypoint_attention };

const char* variant_name(CriticVariant v);
CriticVariant variant_from_name(const std::string& s);
const char* trunk_name(VentralTrunk t);
VentralTrunk trunk_from_name(const std::string& s);

struct ArchitectureSpec {
    CriticVariant variant = CriticVariant::separated;
    VentralTrunk ventral_trunk = VentralTrunk::keypoint_attention;
    int image_size = 64;
    int action_dim = 3;
    int num_classes = kNumClasses;
    float tau = 1.0f;    // spatial-softmax temperature
    int conv1_width = 16;
    int conv_width = 32;
    int dense_width = 64;

    std::string to_json() const;
    static ArchitectureSpec from_json(const std::string& json);
};

/// Dorsal network: p(g | I_0, I_t, a). Head node "grasp".
Graph build_dorsal_graph(const ArchitectureSpec& spec);
/// Shared-trunk network. two_branch: heads "grasp" and "class";
/// single_stream: head "joint17" (index num_classes = failure).
Graph build_combined_graph(const ArchitectureSpec& spec);
/// Present-image classifier (micro-CNN). Head node "class".
Graph build_present_graph(int image_size, int num_classes);

/// A graph plus its parameters; immutable once published to scorers.
struct NetworkBundle {
    Graph graph;
    ParamStore params;
};

Tensor image_to_tensor(const Image& img);                         // [1,3,H,W]
Tensor actions_to_tensor(const std::vector<Action>& actions);     // [M,3]

/// Inference-time smoothing min(p + 0.5, 1) applied to a ventral
/// probability before it multiplies the dorsal score.
float smooth_ventral(float p_c);
/// p(g,c) = p_g * p_c, with optional ventral smoothing.
float combined_score(float p_g, float p_c_target, bool smoothing);

/// A critic assembled per its ArchitectureSpec. `combined` holds the
/// single-stream or two-branch network (also the ventral provider for the
/// separated variant); `dorsal` is the separated variant's independent
/// grasp network. A dorsal-only baseline is a separated model without a
/// combined network.
class CriticModel {
public:
    ArchitectureSpec spec;
    std::shared_ptr<const NetworkBundle> combined;
    std::shared_ptr<const NetworkBundle> dorsal;

    bool has_dorsal_stream() const;
    bool has_ventral_stream() const;

    /// Fresh model with seeded initialization per the spec's variant.
    static CriticModel init(const ArchitectureSpec& spec, uint64_t seed);

    float dorsal_score(const Image& I0, const Image& It, const Action& a) const;
    std::vector<float> ventral_probs(const Image& I0, const Image& It, const Action& a) const;
    std::vector<float> single_stream_probs(const Image& I0, const Image& It, const Action& a) const;
    float target_score(const Image& I0, const Image& It, const Action& a, int target_class,
                       bool smoothing = true) const;
};

void save_critic(const CriticModel& model, const std::string& path);
CriticModel load_critic(const std::string& path);

/// Batched scoring with trunk caching: image-only prefixes are evaluated
/// once per (I_0, I_t) pair, then each action batch runs only the
/// action-dependent suffix. One scorer per thread.
class CriticScorer {
public:
    explicit CriticScorer(const CriticModel& model);

    void set_images(const Image& I0, const Image& It);

    /// Returns p_g per action.
    void dorsal_scores(const std::vector<Action>& actions, std::vector<float>& out);
    /// Returns the full class distribution per action, row-major [M, C].
    void ventral_probs(const std::vector<Action>& actions, std::vector<float>& out);
    void single_stream_probs(const std::vector<Action>& actions, std::vector<float>& out);
    /// Dispatches on the variant; two-stream variants multiply the dorsal
    /// score with the (optionally smoothed) target-class ventral probability.
    void target_scores(const std::vector<Action>& actions, int target_class, bool smoothing,
                       std::vector<float>& out);

    const CriticModel& model() const { return *model_; }

private:
    struct SubgraphPlan {
        std::vector<int> prefix_order;   // image-only nodes
        std::vector<int> suffix_order;   // action-dependent nodes
        std::vector<int> pin_ids;        // prefix outputs feeding the suffix
        std::vector<Tensor> pin_values;  // cached per set_images
        std::unique_ptr<Executor> prefix_exec;
        std::unique_ptr<Executor> suffix_exec;
        const NetworkBundle* net = nullptr;
    };

    void build_plan(SubgraphPlan& plan, const NetworkBundle& net,
                    const std::vector<std::string>& heads);
    void run_suffix(SubgraphPlan& plan, const Tensor& actions);

    const CriticModel* model_;
    std::optional<SubgraphPlan> combined_plan_;
    std::optional<SubgraphPlan> dorsal_plan_;
    bool images_set_ = false;
};

}  // namespace semgrasp
