#include "semgrasp/critic.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include "semgrasp/checkpoint.hpp"
#include "semgrasp/errors.hpp"

namespace semgrasp {

using nlohmann::json;

const char* variant_name(CriticVariant v) {
    switch (v) {
        case CriticVariant::single_stream: return "single_stream";
        case CriticVariant::two_branch: return "two_branch";
        case CriticVariant::separated: return "separated";
    }
    return "?";
}

CriticVariant variant_from_name(const std::string& s) {
    if (s == "single_stream") return CriticVariant::single_stream;
    if (s == "two_branch") return CriticVariant::two_branch;
    if (s == "separated") return CriticVariant::separated;
    throw ConfigError("unknown critic variant: " + s);
}

const char* trunk_name(VentralTrunk t) {
    return t == VentralTrunk::plain_cnn ? "plain_cnn" : "keypoint_attention";
}

VentralTrunk trunk_from_name(const std::string& s) {
    if (s == "plain_cnn") return VentralTrunk::plain_cnn;
    if (s == "keypoint_attention") return VentralTrunk::keypoint_attention;
    throw ConfigError("unknown ventral trunk: " + s);
}

std::string ArchitectureSpec::to_json() const {
    json j;
    j["variant"] = variant_name(variant);
    j["ventral_trunk"] = trunk_name(ventral_trunk);
    j["image_size"] = image_size;
    j["action_dim"] = action_dim;
    j["num_classes"] = num_classes;
    j["tau"] = tau;
    j["conv1_width"] = conv1_width;
    j["conv_width"] = conv_width;
    j["dense_width"] = dense_width;
    return j.dump();
}

ArchitectureSpec ArchitectureSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ArchitectureSpec s;
    s.variant = variant_from_name(j.at("variant").get<std::string>());
    s.ventral_trunk = trunk_from_name(j.at("ventral_trunk").get<std::string>());
    s.image_size = j.at("image_size").get<int>();
    s.action_dim = j.at("action_dim").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.tau = j.at("tau").get<float>();
    s.conv1_width = j.at("conv1_width").get<int>();
    s.conv_width = j.at("conv_width").get<int>();
    s.dense_width = j.at("dense_width").get<int>();
    return s;
}

namespace {

// Shared image/action trunk: two stride-2 conv blocks, then the action
// embedding broadcast-added onto the fused feature map.
int add_trunk(Graph& g, const ArchitectureSpec& spec) {
    const int s = spec.image_size;
    const int i0 = g.add_input("image_0", {3, s, s});
    const int it = g.add_input("image_t", {3, s, s});
    const int act = g.add_input("action", {spec.action_dim});
    const int cat = g.add("cat", LayerSpec::Concat(), {it, i0});
    int x = g.add("c1", LayerSpec::Conv2d(spec.conv1_width, 3, 2), {cat});
    x = g.add("c1_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("c1_relu", LayerSpec::Relu(), {x});
    x = g.add("c2", LayerSpec::Conv2d(spec.conv_width, 3, 2), {x});
    x = g.add("c2_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("c2_relu", LayerSpec::Relu(), {x});
    x = g.add("fuse", LayerSpec::ActionTile(), {x, act});
    return x;
}

// Plain conv branch: two more convs and two dense layers to a logit head.
int add_plain_branch(Graph& g, const ArchitectureSpec& spec, const std::string& prefix, int in,
                     int head_units) {
    int x = g.add(prefix + "3", LayerSpec::Conv2d(spec.conv_width, 3, 2), {in});
    x = g.add(prefix + "3_bn", LayerSpec::BatchNorm(), {x});
    x = g.add(prefix + "3_relu", LayerSpec::Relu(), {x});
    x = g.add(prefix + "4", LayerSpec::Conv2d(spec.conv_width, 3, 1), {x});
    x = g.add(prefix + "4_bn", LayerSpec::BatchNorm(), {x});
    x = g.add(prefix + "4_relu", LayerSpec::Relu(), {x});
    x = g.add(prefix + "fc", LayerSpec::Dense(spec.dense_width), {x});
    x = g.add(prefix + "fc_bn", LayerSpec::BatchNorm(), {x});
    x = g.add(prefix + "fc_relu", LayerSpec::Relu(), {x});
    x = g.add(prefix + "head", LayerSpec::Dense(head_units), {x}, /*zero_init=*/true);
    return x;
}

// Keypoint branch: one conv at the fused resolution, spatial softmax to
// expected coordinates, normalization, then two dense layers.
int add_keypoint_branch(Graph& g, const ArchitectureSpec& spec, const std::string& prefix, int in,
                        int head_units) {
    int x = g.add(prefix + "3", LayerSpec::Conv2d(spec.conv_width, 3, 1), {in});
    x = g.add(prefix + "3_bn", LayerSpec::BatchNorm(), {x});
    x = g.add(prefix + "3_relu", LayerSpec::Relu(), {x});
    x = g.add(prefix + "kp", LayerSpec::SpatialSoftmax(spec.tau), {x});
    x = g.add(prefix + "fn", LayerSpec::FeatureNormalize(), {x});
    x = g.add(prefix + "fc", LayerSpec::Dense(spec.dense_width), {x});
    x = g.add(prefix + "fc_bn", LayerSpec::BatchNorm(), {x});
    x = g.add(prefix + "fc_relu", LayerSpec::Relu(), {x});
    x = g.add(prefix + "head", LayerSpec::Dense(head_units), {x}, /*zero_init=*/true);
    return x;
}

int add_branch(Graph& g, const ArchitectureSpec& spec, VentralTrunk kind, const std::string& prefix,
               int in, int head_units) {
    return kind == VentralTrunk::plain_cnn ? add_plain_branch(g, spec, prefix, in, head_units)
                                           : add_keypoint_branch(g, spec, prefix, in, head_units);
}

}  // namespace

Graph build_dorsal_graph(const ArchitectureSpec& spec) {
    Graph g;
    const int fuse = add_trunk(g, spec);
    const int logit = add_plain_branch(g, spec, "g", fuse, 1);
    g.add("grasp", LayerSpec::Sigmoid(), {logit});
    g.finalize();
    return g;
}

Graph build_combined_graph(const ArchitectureSpec& spec) {
    Graph g;
    const int fuse = add_trunk(g, spec);
    if (spec.variant == CriticVariant::single_stream) {
        const int logit = add_branch(g, spec, spec.ventral_trunk, "s", fuse, spec.num_classes + 1);
        g.add("joint17", LayerSpec::Softmax(), {logit});
    } else {
        const int glogit = add_plain_branch(g, spec, "g", fuse, 1);
        g.add("grasp", LayerSpec::Sigmoid(), {glogit});
        const int clogit = add_branch(g, spec, spec.ventral_trunk, "v", fuse, spec.num_classes);
        g.add("class", LayerSpec::Softmax(), {clogit});
    }
    g.finalize();
    return g;
}

Graph build_present_graph(int image_size, int num_classes) {
    Graph g;
    int x = g.add_input("image", {3, image_size, image_size});
    x = g.add("p1", LayerSpec::Conv2d(8, 3, 2), {x});
    x = g.add("p1_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("p1_relu", LayerSpec::Relu(), {x});
    x = g.add("p2", LayerSpec::Conv2d(16, 3, 2), {x});
    x = g.add("p2_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("p2_relu", LayerSpec::Relu(), {x});
    x = g.add("p3", LayerSpec::Conv2d(16, 3, 2), {x});
    x = g.add("p3_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("p3_relu", LayerSpec::Relu(), {x});
    x = g.add("pfc", LayerSpec::Dense(32), {x});
    x = g.add("pfc_bn", LayerSpec::BatchNorm(), {x});
    x = g.add("pfc_relu", LayerSpec::Relu(), {x});
    x = g.add("phead", LayerSpec::Dense(num_classes), {x}, /*zero_init=*/true);
    g.add("class", LayerSpec::Softmax(), {x});
    g.finalize();
    return g;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, 3, img.height, img.width});
    const size_t hw = size_t(img.height) * size_t(img.width);
    for (size_t i = 0; i < hw; ++i)
        for (size_t c = 0; c < 3; ++c) t.data[c * hw + i] = img.pixels[3 * i + c];
    return t;
}

Tensor actions_to_tensor(const std::vector<Action>& actions) {
    Tensor t({int(actions.size()), 3});
    for (size_t i = 0; i < actions.size(); ++i)
        for (size_t k = 0; k < 3; ++k) t.data[3 * i + k] = actions[i][k];
    return t;
}

float smooth_ventral(float p_c) {
    if (!(p_c >= 0.f && p_c <= 1.f)) throw ShapeError("smooth_ventral: probability outside [0,1]");
    return std::min(p_c + 0.5f, 1.f);
}

float combined_score(float p_g, float p_c_target, bool smoothing) {
    if (!(p_g >= 0.f && p_g <= 1.f)) throw ShapeError("combined_score: p_g outside [0,1]");
    if (!(p_c_target >= 0.f && p_c_target <= 1.f))
        throw ShapeError("combined_score: p_c outside [0,1]");
    return p_g * (smoothing ? smooth_ventral(p_c_target) : p_c_target);
}

bool CriticModel::has_dorsal_stream() const {
    if (spec.variant == CriticVariant::separated) return dorsal != nullptr;
    return spec.variant == CriticVariant::two_branch && combined != nullptr;
}

bool CriticModel::has_ventral_stream() const {
    return spec.variant != CriticVariant::single_stream && combined != nullptr;
}

CriticModel CriticModel::init(const ArchitectureSpec& spec, uint64_t seed) {
    CriticModel m;
    m.spec = spec;
    if (spec.variant == CriticVariant::separated) {
        auto d = std::make_shared<NetworkBundle>();
        d->graph = build_dorsal_graph(spec);
        d->params = d->graph.init_params(derive_seed(seed, 0xd0a5a1));
        m.dorsal = d;
        ArchitectureSpec vspec = spec;
        vspec.variant = CriticVariant::two_branch;
        auto c = std::make_shared<NetworkBundle>();
        c->graph = build_combined_graph(vspec);
        c->params = c->graph.init_params(derive_seed(seed, 0x7e27a1));
        m.combined = c;
    } else {
        auto c = std::make_shared<NetworkBundle>();
        c->graph = build_combined_graph(spec);
        c->params = c->graph.init_params(derive_seed(seed, 0x7e27a1));
        m.combined = c;
    }
    return m;
}

float CriticModel::dorsal_score(const Image& I0, const Image& It, const Action& a) const {
    CriticScorer scorer(*this);
    scorer.set_images(I0, It);
    std::vector<float> out;
    scorer.dorsal_scores({a}, out);
    return out[0];
}

std::vector<float> CriticModel::ventral_probs(const Image& I0, const Image& It,
                                              const Action& a) const {
    CriticScorer scorer(*this);
    scorer.set_images(I0, It);
    std::vector<float> out;
    scorer.ventral_probs({a}, out);
    return out;
}

std::vector<float> CriticModel::single_stream_probs(const Image& I0, const Image& It,
                                                    const Action& a) const {
    CriticScorer scorer(*this);
    scorer.set_images(I0, It);
    std::vector<float> out;
    scorer.single_stream_probs({a}, out);
    return out;
}

float CriticModel::target_score(const Image& I0, const Image& It, const Action& a, int target_class,
                                bool smoothing) const {
    CriticScorer scorer(*this);
    scorer.set_images(I0, It);
    std::vector<float> out;
    scorer.target_scores({a}, target_class, smoothing, out);
    return out[0];
}

// ---------------------------------------------------------------------------
// persistence

namespace {
constexpr const char* kDorsalPrefix = "dorsal:";
constexpr const char* kNetPrefix = "net:";
}  // namespace

void save_critic(const CriticModel& model, const std::string& path) {
    ParamStore merged;
    if (model.dorsal)
        for (const auto& e : model.dorsal->params.entries())
            merged.add(kDorsalPrefix + e.name, e.value, e.trainable);
    if (model.combined)
        for (const auto& e : model.combined->params.entries())
            merged.add(kNetPrefix + e.name, e.value, e.trainable);
    json meta;
    meta["kind"] = "critic";
    meta["arch"] = json::parse(model.spec.to_json());
    meta["has_dorsal"] = model.dorsal != nullptr;
    meta["has_combined"] = model.combined != nullptr;
    save_checkpoint(path, merged, meta.dump());
}

CriticModel load_critic(const std::string& path) {
    LoadedCheckpoint ck = load_checkpoint(path);
    json meta = json::parse(ck.meta_json);
    if (meta.value("kind", "") != "critic") throw IoError("not a critic checkpoint: " + path);
    CriticModel m;
    m.spec = ArchitectureSpec::from_json(meta.at("arch").dump());
    if (meta.value("has_dorsal", false)) {
        auto d = std::make_shared<NetworkBundle>();
        d->graph = build_dorsal_graph(m.spec);
        d->params = d->graph.empty_params<float>();
        for (auto& e : d->params.entries()) e.value.data = ck.params.value(kDorsalPrefix + e.name).data;
        m.dorsal = d;
    }
    if (meta.value("has_combined", false)) {
        ArchitectureSpec cspec = m.spec;
        if (cspec.variant == CriticVariant::separated) cspec.variant = CriticVariant::two_branch;
        auto c = std::make_shared<NetworkBundle>();
        c->graph = build_combined_graph(cspec);
        c->params = c->graph.empty_params<float>();
        for (auto& e : c->params.entries()) e.value.data = ck.params.value(kNetPrefix + e.name).data;
        m.combined = c;
    }
    return m;
}

// ---------------------------------------------------------------------------
// CriticScorer

CriticScorer::CriticScorer(const CriticModel& model) : model_(&model) {
    if (model.combined) {
        combined_plan_.emplace();
        std::vector<std::string> heads;
        if (model.spec.variant == CriticVariant::single_stream) {
            heads = {"joint17"};
        } else if (model.spec.variant == CriticVariant::separated) {
            heads = {"class"};  // only the class branch serves the separated model
        } else {
            heads = {"grasp", "class"};
        }
        build_plan(*combined_plan_, *model.combined, heads);
    }
    if (model.dorsal) {
        dorsal_plan_.emplace();
        build_plan(*dorsal_plan_, *model.dorsal, {"grasp"});
    }
}

void CriticScorer::build_plan(SubgraphPlan& plan, const NetworkBundle& net,
                              const std::vector<std::string>& heads) {
    plan.net = &net;
    const Graph& g = net.graph;
    const auto action_dep = g.depends_on(g.node_id("action"));

    std::vector<bool> needed(size_t(g.size()), false);
    for (const auto& h : heads) needed[size_t(g.node_id(h))] = true;
    for (int id = g.size() - 1; id >= 0; --id) {
        if (!needed[size_t(id)]) continue;
        for (int in : g.node(id).inputs) needed[size_t(in)] = true;
    }

    for (int id = 0; id < g.size(); ++id) {
        if (!needed[size_t(id)]) continue;
        if (g.node(id).spec.kind == LayerKind::input) continue;
        if (action_dep[size_t(id)])
            plan.suffix_order.push_back(id);
        else
            plan.prefix_order.push_back(id);
    }
    for (int id : plan.suffix_order) {
        for (int in : g.node(id).inputs) {
            const Node& src = g.node(in);
            if (action_dep[size_t(in)]) continue;
            if (src.spec.kind == LayerKind::input && src.name == "action") continue;
            if (std::find(plan.pin_ids.begin(), plan.pin_ids.end(), in) == plan.pin_ids.end())
                plan.pin_ids.push_back(in);
        }
    }
    plan.prefix_exec = std::make_unique<Executor>(g);
    plan.suffix_exec = std::make_unique<Executor>(g);
    plan.pin_values.resize(plan.pin_ids.size());
}

void CriticScorer::set_images(const Image& I0, const Image& It) {
    const Tensor t0 = image_to_tensor(I0);
    const Tensor tt = image_to_tensor(It);
    const std::map<std::string, const Tensor*> inputs = {{"image_0", &t0}, {"image_t", &tt}};
    for (SubgraphPlan* plan :
         {combined_plan_ ? &*combined_plan_ : nullptr, dorsal_plan_ ? &*dorsal_plan_ : nullptr}) {
        if (!plan) continue;
        plan->prefix_exec->forward_subset(plan->net->params, plan->prefix_order, inputs, {});
        for (size_t i = 0; i < plan->pin_ids.size(); ++i) {
            const int id = plan->pin_ids[i];
            const Node& src = plan->net->graph.node(id);
            if (src.spec.kind == LayerKind::input) {
                plan->pin_values[i] = src.name == "image_0" ? t0 : tt;
            } else {
                plan->pin_values[i] = plan->prefix_exec->activation(id);
            }
        }
    }
    images_set_ = true;
}

void CriticScorer::run_suffix(SubgraphPlan& plan, const Tensor& actions) {
    if (!images_set_) throw ShapeError("CriticScorer: set_images before scoring");
    std::map<int, const Tensor*> pinned;
    for (size_t i = 0; i < plan.pin_ids.size(); ++i) pinned[plan.pin_ids[i]] = &plan.pin_values[i];
    const std::map<std::string, const Tensor*> inputs = {{"action", &actions}};
    plan.suffix_exec->forward_subset(plan.net->params, plan.suffix_order, inputs, pinned);
}

void CriticScorer::dorsal_scores(const std::vector<Action>& actions, std::vector<float>& out) {
    SubgraphPlan* plan = nullptr;
    if (model_->spec.variant == CriticVariant::separated && dorsal_plan_) {
        plan = &*dorsal_plan_;
    } else if (model_->spec.variant == CriticVariant::two_branch && combined_plan_) {
        plan = &*combined_plan_;
    }
    if (!plan) throw Error("dorsal stream unavailable for this model");
    const Tensor acts = actions_to_tensor(actions);
    run_suffix(*plan, acts);
    const Tensor& y = plan->suffix_exec->activation("grasp");
    out.assign(y.data.begin(), y.data.end());
    for (float v : out)
        if (!std::isfinite(v)) throw NumericError("dorsal_scores: non-finite output");
}

void CriticScorer::ventral_probs(const std::vector<Action>& actions, std::vector<float>& out) {
    if (model_->spec.variant == CriticVariant::single_stream)
        throw Error("single_stream model has no ventral head");
    if (!combined_plan_) throw Error("ventral stream unavailable for this model");
    const Tensor acts = actions_to_tensor(actions);
    run_suffix(*combined_plan_, acts);
    const Tensor& y = combined_plan_->suffix_exec->activation("class");
    out.assign(y.data.begin(), y.data.end());
    for (float v : out)
        if (!std::isfinite(v)) throw NumericError("ventral_probs: non-finite output");
}

void CriticScorer::single_stream_probs(const std::vector<Action>& actions, std::vector<float>& out) {
    if (model_->spec.variant != CriticVariant::single_stream)
        throw Error("single_stream_probs requires a single_stream model");
    const Tensor acts = actions_to_tensor(actions);
    run_suffix(*combined_plan_, acts);
    const Tensor& y = combined_plan_->suffix_exec->activation("joint17");
    out.assign(y.data.begin(), y.data.end());
    for (float v : out)
        if (!std::isfinite(v)) throw NumericError("single_stream_probs: non-finite output");
}

void CriticScorer::target_scores(const std::vector<Action>& actions, int target_class, bool smoothing,
                                 std::vector<float>& out) {
    if (target_class < 0 || target_class >= model_->spec.num_classes)
        throw ShapeError("target_scores: class index out of range");
    const size_t M = actions.size();
    out.resize(M);
    if (model_->spec.variant == CriticVariant::single_stream) {
        std::vector<float> probs;
        single_stream_probs(actions, probs);
        const int K = model_->spec.num_classes + 1;
        for (size_t i = 0; i < M; ++i) out[i] = probs[i * size_t(K) + size_t(target_class)];
        return;
    }
    std::vector<float> pg;
    dorsal_scores(actions, pg);
    std::vector<float> pc;
    ventral_probs(actions, pc);
    const int K = model_->spec.num_classes;
    for (size_t i = 0; i < M; ++i) {
        const float c = pc[i * size_t(K) + size_t(target_class)];
        out[i] = combined_score(pg[i], std::clamp(c, 0.f, 1.f), smoothing);
    }
}

}  // namespace semgrasp
