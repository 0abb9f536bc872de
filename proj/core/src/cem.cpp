#include "semgrasp/cem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "semgrasp/errors.hpp"

namespace semgrasp {

namespace {
constexpr float kPi = 3.14159265358979323846f;
constexpr uint64_t kEpisodeTag = 0xe915;
}  // namespace

void CEMConfig::validate() const {
    const size_t d = init_mean.size();
    if (d == 0) throw ConfigError("cem: empty action dimension");
    if (init_stddev.size() != d || lo.size() != d || hi.size() != d)
        throw ConfigError("cem: dimension mismatch in config vectors");
    if (population < 1 || elites < 1 || elites > population)
        throw ConfigError("cem: need 1 <= elites <= population");
    if (iterations < 1) throw ConfigError("cem: iterations must be >= 1");
    for (size_t i = 0; i < d; ++i) {
        if (!(init_stddev[i] > 0.0)) throw ConfigError("cem: stddev must be > 0");
        if (!(lo[i] <= hi[i])) throw ConfigError("cem: lo must be <= hi");
    }
}

CEMResult cem_optimize(const BatchScoreFn& score_fn, const CEMConfig& cfg, Rng& rng,
                       const SamplerFn* sampler) {
    cfg.validate();
    const size_t d = cfg.init_mean.size();
    std::vector<double> mean = cfg.init_mean;
    std::vector<double> stddev = cfg.init_stddev;
    for (size_t i = 0; i < d; ++i) mean[i] = std::clamp(mean[i], cfg.lo[i], cfg.hi[i]);

    CEMResult result;
    result.best_score = -std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> samples;
    std::vector<double> scores;
    std::vector<int> order;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        if (sampler) {
            (*sampler)(iter, rng, samples);
        } else {
            samples.assign(size_t(cfg.population), std::vector<double>(d));
            for (auto& s : samples)
                for (size_t i = 0; i < d; ++i)
                    s[i] = std::clamp(rng.normal(mean[i], stddev[i]), cfg.lo[i], cfg.hi[i]);
        }
        score_fn(samples, scores);
        if (scores.size() != samples.size()) throw Error("cem: score_fn returned wrong count");
        result.evals += int(samples.size());

        order.resize(samples.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (scores[size_t(a)] != scores[size_t(b)]) return scores[size_t(a)] > scores[size_t(b)];
            return a < b;
        });

        CEMIterStat stat;
        stat.iter_best = scores[size_t(order[0])];
        if (stat.iter_best > result.best_score) {
            result.best_score = stat.iter_best;
            result.best = samples[size_t(order[0])];
        }
        stat.best_so_far = result.best_score;

        const int k = std::min<int>(cfg.elites, int(samples.size()));
        for (size_t i = 0; i < d; ++i) {
            double sum = 0.0, sq = 0.0;
            for (int e = 0; e < k; ++e) {
                const double v = samples[size_t(order[size_t(e)])][i];
                sum += v;
                sq += v * v;
            }
            const double m = sum / k;
            const double var = std::max(0.0, sq / k - m * m);
            mean[i] = std::clamp(m, cfg.lo[i], cfg.hi[i]);
            stddev[i] = std::max(std::sqrt(var), cfg.stddev_floor);
        }
        stat.mean = mean;
        stat.stddev = stddev;
        result.trace.push_back(std::move(stat));
    }
    return result;
}

// ---------------------------------------------------------------------------

ServoConfig ServoConfig::collection() {
    ServoConfig s;
    s.steps = 10;
    s.cem_iterations = 2;
    s.hover_approach = false;
    return s;
}

ServoConfig ServoConfig::inference() {
    ServoConfig s;
    s.steps = 4;
    s.cem_iterations = 3;
    s.hover_approach = true;
    return s;
}

CEMConfig ServoConfig::cem() const {
    CEMConfig c;
    c.population = cem_population;
    c.elites = std::max(1, cem_population / 10);
    c.iterations = cem_iterations;
    c.init_mean = {0.0, 0.0, 0.0};
    for (int i = 0; i < 3; ++i) {
        c.lo.push_back(-double(max_step[size_t(i)]));
        c.hi.push_back(double(max_step[size_t(i)]));
        c.init_stddev.push_back(double(max_step[size_t(i)]) * 0.5);
    }
    return c;
}

const char* policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::random: return "random";
        case PolicyKind::dorsal_only: return "dorsal_only";
        case PolicyKind::semantic: return "semantic";
        case PolicyKind::oracle: return "oracle";
    }
    return "?";
}

PolicyKind policy_from_name(const std::string& s) {
    if (s == "random") return PolicyKind::random;
    if (s == "dorsal_only") return PolicyKind::dorsal_only;
    if (s == "semantic") return PolicyKind::semantic;
    if (s == "oracle") return PolicyKind::oracle;
    throw ConfigError("unknown policy kind: " + s);
}

const char* label_source_name(LabelSource s) {
    switch (s) {
        case LabelSource::none: return "none";
        case LabelSource::ground_truth: return "ground_truth";
        case LabelSource::single_class_bin: return "single_class_bin";
        case LabelSource::rater_consensus: return "rater_consensus";
        case LabelSource::propagated: return "propagated";
    }
    return "?";
}

LabelSource label_source_from_name(const std::string& s) {
    if (s == "none") return LabelSource::none;
    if (s == "ground_truth") return LabelSource::ground_truth;
    if (s == "single_class_bin") return LabelSource::single_class_bin;
    if (s == "rater_consensus") return LabelSource::rater_consensus;
    if (s == "propagated") return LabelSource::propagated;
    throw ConfigError("unknown label source: " + s);
}

int label_source_rank(LabelSource s) {
    switch (s) {
        case LabelSource::none: return 0;
        case LabelSource::propagated: return 1;
        case LabelSource::single_class_bin: return 2;
        case LabelSource::rater_consensus: return 3;
        case LabelSource::ground_truth: return 4;
    }
    return 0;
}

CriticObjective::CriticObjective(const CriticModel& model, std::optional<int> target_class,
                                 bool smoothing)
    : scorer_(model), target_class_(target_class), smoothing_(smoothing) {}

void CriticObjective::begin_step(const Image& I0, const Image& It, const GripperPose&) {
    scorer_.set_images(I0, It);
}

void CriticObjective::score(const std::vector<Action>& candidates, std::vector<float>& out) {
    if (target_class_)
        scorer_.target_scores(candidates, *target_class_, smoothing_, out);
    else
        scorer_.dorsal_scores(candidates, out);
}

namespace {

// Runs the per-step CEM over the objective from the current world state.
CEMResult optimize_step(const Simulator& sim, const WorldState& world, const Image& I0,
                        ActionObjective& objective, const ServoConfig& servo, Rng& rng) {
    const Image It = sim.render(world, true);
    objective.begin_step(I0, It, world.gripper);
    const auto score_fn = [&](const std::vector<std::vector<double>>& xs, std::vector<double>& out) {
        std::vector<Action> acts(xs.size());
        for (size_t i = 0; i < xs.size(); ++i)
            acts[i] = {float(xs[i][0]), float(xs[i][1]), float(xs[i][2])};
        std::vector<float> scores;
        objective.score(acts, scores);
        out.assign(scores.begin(), scores.end());
    };
    return cem_optimize(score_fn, servo.cem(), rng);
}

Action to_action(const std::vector<double>& v) { return {float(v[0]), float(v[1]), float(v[2])}; }

}  // namespace

GripperPose select_hover_pose(const Simulator& sim, const WorldState& world, ActionObjective& objective,
                              const ServoConfig& servo, Rng& rng, int* chosen_index) {
    const int n = std::max(1, servo.hover_pose_count);
    // the gripper-free scene doubles as I_0 for approach scoring
    const Image I0 = sim.render(world, false);
    double best_score = -std::numeric_limits<double>::infinity();
    int best_index = 0;
    for (int i = 0; i < n; ++i) {
        GripperPose pose;
        pose.x = (float(i) + 0.5f) / float(n);
        pose.y = 0.5f;
        pose.phi = 0.f;
        WorldState hover = world;
        hover.gripper = pose;
        const CEMResult r = optimize_step(sim, hover, I0, objective, servo, rng);
        if (r.best_score > best_score) {
            best_score = r.best_score;
            best_index = i;
        }
    }
    if (chosen_index) *chosen_index = best_index;
    GripperPose pose;
    pose.x = (float(best_index) + 0.5f) / float(n);
    pose.y = 0.5f;
    pose.phi = 0.f;
    return pose;
}

EpisodeResult run_episode(const Simulator& sim, PolicyKind kind, const CriticModel* model,
                          const WorldState& start, std::optional<int> target_class,
                          const ServoConfig& servo, uint64_t seed, ActionObjective* objective_override,
                          const GripperPose* approach_override) {
    if (kind != PolicyKind::random && kind != PolicyKind::oracle && !model && !objective_override)
        throw ConfigError("run_episode: model required for policy " + std::string(policy_name(kind)));
    if (kind == PolicyKind::semantic && !target_class)
        throw ConfigError("run_episode: semantic policy needs a target class");

    Rng rng(derive_seed(seed, kEpisodeTag));
    Episode ep;
    ep.seed = seed;
    ep.policy = kind;
    ep.target_class = target_class;

    WorldState world = start;
    const Image I0 = sim.render(world, /*draw_gripper=*/false);
    ep.initial_image = I0;

    std::unique_ptr<CriticObjective> own_objective;
    ActionObjective* objective = objective_override;
    if (!objective && (kind == PolicyKind::dorsal_only || kind == PolicyKind::semantic)) {
        own_objective = std::make_unique<CriticObjective>(
            *model, kind == PolicyKind::semantic ? target_class : std::nullopt, servo.smoothing);
        objective = own_objective.get();
    }

    // Approach: hover-pose search at inference, random approach otherwise.
    const ObjectInstance* oracle_target = nullptr;
    if (kind == PolicyKind::oracle) {
        float best_d = 1e9f;
        for (const auto& obj : world.objects) {
            if (world.is_removed(obj.id)) continue;
            const bool match = !target_class || obj.class_id == *target_class;
            if (!match) continue;
            const float dx = obj.x - world.gripper.x, dy = obj.y - world.gripper.y;
            const float d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                oracle_target = &obj;
            }
        }
    }
    if (approach_override) {
        world.gripper = *approach_override;
    } else if (kind == PolicyKind::oracle) {
        if (oracle_target) {
            world.gripper.x = oracle_target->x;
            world.gripper.y = oracle_target->y;
            world.gripper.phi = 0.f;
        }
    } else if (kind == PolicyKind::random || !servo.hover_approach) {
        world.gripper.x = float(rng.uniform(0.0, 1.0));
        world.gripper.y = float(rng.uniform(0.0, 1.0));
        world.gripper.phi = float(rng.uniform(0.0, double(kPi)));
    } else {
        world.gripper = select_hover_pose(sim, world, *objective, servo, rng);
    }

    for (int t = 0; t < servo.steps; ++t) {
        EpisodeStep step;
        step.image = sim.render(world, true);
        if (kind == PolicyKind::random) {
            step.action = {float(rng.uniform(-servo.max_step[0], servo.max_step[0])),
                           float(rng.uniform(-servo.max_step[1], servo.max_step[1])),
                           float(rng.uniform(-servo.max_step[2], servo.max_step[2]))};
        } else if (kind == PolicyKind::oracle) {
            Action a = {0.f, 0.f, 0.f};
            if (oracle_target) {
                a[0] = std::clamp(oracle_target->x - world.gripper.x, -servo.max_step[0],
                                  servo.max_step[0]);
                a[1] = std::clamp(oracle_target->y - world.gripper.y, -servo.max_step[1],
                                  servo.max_step[1]);
                if (oracle_target->shape == ShapeKind::bar) {
                    float want = std::fmod(oracle_target->theta, kPi);
                    if (want < 0.f) want += kPi;
                    float dphi = want - world.gripper.phi;
                    if (dphi > kPi / 2.f) dphi -= kPi;
                    if (dphi < -kPi / 2.f) dphi += kPi;
                    a[2] = std::clamp(dphi, -servo.max_step[2], servo.max_step[2]);
                }
            }
            step.action = a;
        } else {
            objective->begin_step(I0, step.image, world.gripper);
            const auto score_fn = [&](const std::vector<std::vector<double>>& xs,
                                      std::vector<double>& out) {
                std::vector<Action> acts(xs.size());
                for (size_t i = 0; i < xs.size(); ++i)
                    acts[i] = {float(xs[i][0]), float(xs[i][1]), float(xs[i][2])};
                std::vector<float> scores;
                objective->score(acts, scores);
                out.assign(scores.begin(), scores.end());
            };
            const CEMResult r = cem_optimize(score_fn, servo.cem(), rng);
            step.action = to_action(r.best);
            step.best_score = float(r.best_score);
            step.cem_evals = r.evals;
        }
        world = sim.apply_action(world, step.action);
        ep.steps.push_back(std::move(step));
    }

    auto [outcome, final_world] = sim.close_gripper(world);
    ep.outcome = outcome;

    const Image after = sim.render(final_world, /*draw_gripper=*/false);
    ep.auto_label = sim.image_delta_label(I0, after);

    if (outcome.success) {
        const ObjectInstance* grasped = nullptr;
        for (const auto& obj : start.objects)
            if (obj.id == outcome.grasped_ids[0]) grasped = &obj;
        if (grasped) ep.present_image = sim.render_present(*grasped, rng);
    }
    return {std::move(ep), std::move(final_world)};
}

}  // namespace semgrasp
