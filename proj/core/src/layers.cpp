#include "semgrasp/layers.hpp"

namespace semgrasp {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::input: return "input";
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::batch_norm: return "batch_norm";
        case LayerKind::softmax: return "softmax";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::spatial_softmax: return "spatial_softmax";
        case LayerKind::feature_normalize: return "feature_normalize";
        case LayerKind::concat: return "concat";
        case LayerKind::action_tile: return "action_tile";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (int k = 0; k <= int(LayerKind::action_tile); ++k) {
        if (name == layer_kind_name(LayerKind(k))) return LayerKind(k);
    }
    throw ShapeError("unknown layer kind: " + name);
}

}  // namespace semgrasp
