#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semgrasp/layers.hpp"
#include "semgrasp/params.hpp"
#include "semgrasp/tensor.hpp"

namespace semgrasp {

struct Node {
    std::string name;
    LayerSpec spec;
    std::vector<int> inputs;     // node ids
    std::vector<int> out_shape;  // without the batch dimension; filled by finalize()
    bool zero_init = false;      // dense heads start at zero so outputs begin uniform
};

/// Static feed-forward graph over the supported layer kinds. Nodes are stored
/// in topological (insertion) order; shapes are inferred once at finalize().
class Graph {
public:
    int add_input(const std::string& name, std::vector<int> shape);
    int add(const std::string& name, LayerSpec spec, std::vector<int> inputs, bool zero_init = false);

    void finalize();
    bool finalized() const { return finalized_; }

    int node_id(const std::string& name) const;
    const Node& node(int id) const { return nodes_[size_t(id)]; }
    const std::vector<Node>& nodes() const { return nodes_; }
    int size() const { return int(nodes_.size()); }

    /// Marks node ids whose value depends on the given input node.
    std::vector<bool> depends_on(int input_id) const;

    /// Freshly initialized parameters (He init for weight matrices, identity
    /// batch-norm, zeroed heads).
    ParamStore init_params(uint64_t seed) const;

    /// Declares the parameter layout into an empty store (zero values); used
    /// to build double-precision stores for gradient checking.
    template <typename T>
    ParamStoreT<T> empty_params() const;

private:
    std::vector<Node> nodes_;
    std::map<std::string, int> by_name_;
    bool finalized_ = false;
};

enum class Mode {
    Infer,        // batch_norm uses running statistics
    Train,        // batch statistics; running stats updated
    TrainFrozen,  // batch statistics; running stats untouched (gradient checking)
};

/// Runs forward/backward passes over a Graph. Owns per-node activation
/// storage, so one Executor serves one thread; the Graph and ParamStore may
/// be shared read-only across many executors.
template <typename T>
class ExecutorT {
public:
    explicit ExecutorT(const Graph& g);

    /// `inputs` maps input-node name to a tensor whose first dimension is the
    /// batch. Inference never mutates params.
    void forward(const ParamStoreT<T>& params, const std::map<std::string, const TensorT<T>*>& inputs);

    /// Training-mode forward; updates batch-norm running statistics unless
    /// mode is TrainFrozen.
    void forward_train(ParamStoreT<T>& params, const std::map<std::string, const TensorT<T>*>& inputs,
                       Mode mode = Mode::Train);

    /// Partial forward for scoring loops: evaluates only `eval_order` nodes,
    /// taking every other referenced activation from `pinned`.
    void forward_subset(const ParamStoreT<T>& params, const std::vector<int>& eval_order,
                        const std::map<std::string, const TensorT<T>*>& inputs,
                        const std::map<int, const TensorT<T>*>& pinned);

    /// Accumulates parameter gradients into `params` grad slots for the given
    /// output-node gradients. Requires a prior full forward pass. When
    /// `input_grads` is non-null it receives d(loss)/d(input) per input node.
    void backward(ParamStoreT<T>& params, const std::map<int, const TensorT<T>*>& output_grads,
                  std::map<int, TensorT<T>>* input_grads = nullptr);

    const TensorT<T>& activation(int node_id) const { return act_[size_t(node_id)]; }
    const TensorT<T>& activation(const std::string& name) const {
        return act_[size_t(graph_->node_id(name))];
    }

    /// Scans every activation for NaN/Inf and throws NumericError on hit.
    void check_finite(const std::string& context) const;

private:
    void eval_node(int id, const ParamStoreT<T>& params, Mode mode, bool update_running);
    void backward_node(int id, const ParamStoreT<T>& params, ParamStoreT<T>& grads_into);

    const Graph* graph_;
    std::vector<TensorT<T>> act_;
    std::vector<TensorT<T>> aux_;    // layer-specific saved forward state
    std::vector<TensorT<T>> aux2_;   // secondary saved state (e.g. inv-std)
    std::vector<TensorT<T>> grad_;   // d(loss)/d(activation), backward only
    std::vector<char> computed_;
    Mode last_mode_ = Mode::Infer;
    bool forward_done_ = false;
};

using Executor = ExecutorT<float>;
using ExecutorD = ExecutorT<double>;

}  // namespace semgrasp
