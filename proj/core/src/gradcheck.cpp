#include "semgrasp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "semgrasp/rng.hpp"

namespace semgrasp {

namespace {

double loss_of(ExecutorD& ex, const std::vector<int>& out_ids,
               const std::vector<TensorD>& loss_weights) {
    double loss = 0.0;
    for (size_t i = 0; i < out_ids.size(); ++i) {
        const TensorD& y = ex.activation(out_ids[i]);
        const TensorD& w = loss_weights[i];
        for (size_t k = 0; k < y.data.size(); ++k) loss += y.data[k] * w.data[k];
    }
    return loss;
}

}  // namespace

GradCheckReport grad_check(const Graph& graph, const ParamStoreD& params,
                           const std::map<std::string, const TensorD*>& inputs,
                           const std::vector<std::string>& output_nodes, uint64_t loss_seed, double h) {
    ParamStoreD work = params;
    ExecutorD ex(graph);

    std::vector<int> out_ids;
    for (const auto& name : output_nodes) out_ids.push_back(graph.node_id(name));

    // Fixed random loss weights, one per output element.
    ex.forward_train(work, inputs, Mode::TrainFrozen);
    Rng wrng(derive_seed(loss_seed, 0x10e55));
    std::vector<TensorD> loss_weights;
    for (int id : out_ids) {
        TensorD w(ex.activation(id).shape);
        for (auto& v : w.data) v = wrng.uniform(-1.0, 1.0);
        loss_weights.push_back(std::move(w));
    }

    // Analytic gradients.
    work.zero_grads();
    std::map<int, const TensorD*> seeds;
    for (size_t i = 0; i < out_ids.size(); ++i) seeds[out_ids[i]] = &loss_weights[i];
    ex.backward(work, seeds);

    GradCheckReport report;
    for (auto& entry : work.entries()) {
        if (!entry.trainable) continue;
        GradCheckEntry pe;
        pe.param = entry.name;
        for (size_t k = 0; k < entry.value.data.size(); ++k) {
            const double saved = entry.value.data[k];
            entry.value.data[k] = saved + h;
            ex.forward_train(work, inputs, Mode::TrainFrozen);
            const double lp = loss_of(ex, out_ids, loss_weights);
            entry.value.data[k] = saved - h;
            ex.forward_train(work, inputs, Mode::TrainFrozen);
            const double lm = loss_of(ex, out_ids, loss_weights);
            entry.value.data[k] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = entry.grad.data[k];
            const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
            const double rel = std::abs(analytic - numeric) / denom;
            pe.max_rel_err = std::max(pe.max_rel_err, rel);
        }
        if (pe.max_rel_err > report.max_rel_err) {
            report.max_rel_err = pe.max_rel_err;
            report.worst_param = pe.param;
        }
        report.per_param.push_back(std::move(pe));
    }
    return report;
}

}  // namespace semgrasp
