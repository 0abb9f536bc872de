#pragma once

#include <string>

#include "semgrasp/errors.hpp"

namespace semgrasp {

enum class LayerKind {
    input,
    dense,
    conv2d,
    relu,
    batch_norm,
    softmax,
    sigmoid,
    spatial_softmax,
    feature_normalize,
    concat,
    action_tile,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

/// Hyperparameters for one graph node. Only the fields relevant to `kind`
/// are read.
struct LayerSpec {
    LayerKind kind = LayerKind::input;
    int units = 0;         // dense: output features
    int out_channels = 0;  // conv2d
    int kernel = 1;        // conv2d
    int stride = 1;        // conv2d
    bool same_pad = true;  // conv2d: same (true) or valid (false)
    float tau = 1.0f;      // spatial_softmax temperature
    float eps = 1e-5f;     // batch_norm epsilon
    float momentum = 0.99f;  // batch_norm running-stat EMA

    void validate() const {
        switch (kind) {
            case LayerKind::dense:
                if (units < 1) throw ShapeError("dense: units must be >= 1");
                break;
            case LayerKind::conv2d:
                if (kernel < 1) throw ShapeError("conv2d: kernel must be >= 1");
                if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
                if (out_channels < 1) throw ShapeError("conv2d: out_channels must be >= 1");
                break;
            case LayerKind::spatial_softmax:
                if (!(tau > 0.f)) throw ShapeError("spatial_softmax: tau must be > 0");
                break;
            case LayerKind::batch_norm:
                if (!(eps > 0.f)) throw ShapeError("batch_norm: eps must be > 0");
                break;
            default:
                break;
        }
    }

    static LayerSpec Input() { return {LayerKind::input, 0, 0, 1, 1, true, 1.f, 1e-5f, 0.99f}; }
    static LayerSpec Dense(int units) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.units = units;
        return s;
    }
    static LayerSpec Conv2d(int out_channels, int kernel, int stride, bool same_pad = true) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.out_channels = out_channels;
        s.kernel = kernel;
        s.stride = stride;
        s.same_pad = same_pad;
        return s;
    }
    static LayerSpec Relu() {
        LayerSpec s;
        s.kind = LayerKind::relu;
        return s;
    }
    static LayerSpec BatchNorm() {
        LayerSpec s;
        s.kind = LayerKind::batch_norm;
        return s;
    }
    static LayerSpec Softmax() {
        LayerSpec s;
        s.kind = LayerKind::softmax;
        return s;
    }
    static LayerSpec Sigmoid() {
        LayerSpec s;
        s.kind = LayerKind::sigmoid;
        return s;
    }
    static LayerSpec SpatialSoftmax(float tau) {
        LayerSpec s;
        s.kind = LayerKind::spatial_softmax;
        s.tau = tau;
        return s;
    }
    static LayerSpec FeatureNormalize() {
        LayerSpec s;
        s.kind = LayerKind::feature_normalize;
        return s;
    }
    static LayerSpec Concat() {
        LayerSpec s;
        s.kind = LayerKind::concat;
        return s;
    }
    static LayerSpec ActionTile() {
        LayerSpec s;
        s.kind = LayerKind::action_tile;
        return s;
    }
};

}  // namespace semgrasp
