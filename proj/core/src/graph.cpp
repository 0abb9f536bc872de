#include "semgrasp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "semgrasp/blas.hpp"
#include "semgrasp/rng.hpp"

namespace semgrasp {

namespace {

int64_t flat_count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

int conv_out_dim(int in, int kernel, int stride, int pad) {
    const int padded = in + 2 * pad;
    if (padded < kernel) throw ShapeError("conv2d: kernel larger than padded input");
    return (padded - kernel) / stride + 1;
}

int conv_pad(const LayerSpec& s) {
    if (!s.same_pad) return 0;
    if (s.kernel % 2 == 0) throw ShapeError("conv2d: same padding requires an odd kernel");
    return (s.kernel - 1) / 2;
}

// Mesh coordinate in [-1,1]; a singleton axis maps to 0.
inline double mesh_coord(int i, int n) { return n == 1 ? 0.0 : -1.0 + 2.0 * double(i) / double(n - 1); }

}  // namespace

// ---------------------------------------------------------------------------
// Graph

int Graph::add_input(const std::string& name, std::vector<int> shape) {
    if (finalized_) throw ShapeError("graph already finalized");
    if (by_name_.count(name)) throw ShapeError("duplicate node name: " + name);
    Node n;
    n.name = name;
    n.spec = LayerSpec::Input();
    n.out_shape = std::move(shape);
    by_name_[name] = int(nodes_.size());
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

int Graph::add(const std::string& name, LayerSpec spec, std::vector<int> inputs, bool zero_init) {
    if (finalized_) throw ShapeError("graph already finalized");
    if (by_name_.count(name)) throw ShapeError("duplicate node name: " + name);
    spec.validate();
    for (int id : inputs)
        if (id < 0 || id >= int(nodes_.size())) throw ShapeError("bad input id for node " + name);
    Node n;
    n.name = name;
    n.spec = spec;
    n.inputs = std::move(inputs);
    n.zero_init = zero_init;
    by_name_[name] = int(nodes_.size());
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
}

int Graph::node_id(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ShapeError("unknown node: " + name);
    return it->second;
}

void Graph::finalize() {
    for (auto& n : nodes_) {
        const auto in_shape = [&](size_t i) -> const std::vector<int>& {
            return nodes_[size_t(n.inputs[i])].out_shape;
        };
        switch (n.spec.kind) {
            case LayerKind::input:
                break;
            case LayerKind::dense: {
                if (n.inputs.size() != 1) throw ShapeError(n.name + ": dense takes one input");
                n.out_shape = {n.spec.units};
                break;
            }
            case LayerKind::conv2d: {
                if (n.inputs.size() != 1) throw ShapeError(n.name + ": conv2d takes one input");
                const auto& s = in_shape(0);
                if (s.size() != 3) throw ShapeError(n.name + ": conv2d needs [C,H,W] input");
                const int pad = conv_pad(n.spec);
                n.out_shape = {n.spec.out_channels, conv_out_dim(s[1], n.spec.kernel, n.spec.stride, pad),
                               conv_out_dim(s[2], n.spec.kernel, n.spec.stride, pad)};
                break;
            }
            case LayerKind::relu:
            case LayerKind::sigmoid:
            case LayerKind::batch_norm: {
                if (n.inputs.size() != 1) throw ShapeError(n.name + ": takes one input");
                n.out_shape = in_shape(0);
                break;
            }
            case LayerKind::softmax: {
                if (n.inputs.size() != 1 || in_shape(0).size() != 1)
                    throw ShapeError(n.name + ": softmax needs a feature-vector input");
                n.out_shape = in_shape(0);
                break;
            }
            case LayerKind::spatial_softmax: {
                if (n.inputs.size() != 1 || in_shape(0).size() != 3)
                    throw ShapeError(n.name + ": spatial_softmax needs [C,H,W] input");
                n.out_shape = {2 * in_shape(0)[0]};
                break;
            }
            case LayerKind::feature_normalize: {
                if (n.inputs.size() != 1 || in_shape(0).size() != 1)
                    throw ShapeError(n.name + ": feature_normalize needs a feature-vector input");
                if (in_shape(0)[0] < 2)
                    throw ShapeError(n.name + ": feature_normalize needs length >= 2");
                n.out_shape = in_shape(0);
                break;
            }
            case LayerKind::concat: {
                if (n.inputs.size() < 2) throw ShapeError(n.name + ": concat needs >= 2 inputs");
                auto shape = in_shape(0);
                for (size_t i = 1; i < n.inputs.size(); ++i) {
                    const auto& s = in_shape(i);
                    if (s.size() != shape.size())
                        throw ShapeError(n.name + ": concat rank mismatch");
                    for (size_t d = 1; d < s.size(); ++d)
                        if (s[d] != shape[d]) throw ShapeError(n.name + ": concat trailing dims differ");
                    shape[0] += s[0];
                }
                n.out_shape = shape;
                break;
            }
            case LayerKind::action_tile: {
                if (n.inputs.size() != 2) throw ShapeError(n.name + ": action_tile takes [map, action]");
                if (in_shape(0).size() != 3 || in_shape(1).size() != 1)
                    throw ShapeError(n.name + ": action_tile needs [C,H,W] map and vector action");
                n.out_shape = in_shape(0);
                break;
            }
        }
    }
    finalized_ = true;
}

std::vector<bool> Graph::depends_on(int input_id) const {
    std::vector<bool> dep(nodes_.size(), false);
    dep[size_t(input_id)] = true;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        for (int in : nodes_[i].inputs)
            if (dep[size_t(in)]) dep[i] = true;
    }
    return dep;
}

template <typename T>
ParamStoreT<T> Graph::empty_params() const {
    if (!finalized_) throw ShapeError("graph not finalized");
    ParamStoreT<T> store;
    for (const auto& n : nodes_) {
        const auto in0 = [&]() -> const std::vector<int>& {
            return nodes_[size_t(n.inputs[0])].out_shape;
        };
        switch (n.spec.kind) {
            case LayerKind::dense: {
                const int fan_in = int(flat_count(in0()));
                store.add(n.name + "/W", TensorT<T>({n.spec.units, fan_in}), true);
                store.add(n.name + "/b", TensorT<T>({n.spec.units}), true);
                break;
            }
            case LayerKind::conv2d: {
                const int ic = in0()[0];
                store.add(n.name + "/W",
                          TensorT<T>({n.spec.out_channels, ic, n.spec.kernel, n.spec.kernel}), true);
                store.add(n.name + "/b", TensorT<T>({n.spec.out_channels}), true);
                break;
            }
            case LayerKind::batch_norm: {
                const int c = in0()[0];
                store.add(n.name + "/gamma", TensorT<T>({c}), true);
                store.add(n.name + "/beta", TensorT<T>({c}), true);
                store.add(n.name + "/run_mean", TensorT<T>({c}), false);
                store.add(n.name + "/run_var", TensorT<T>({c}), false);
                break;
            }
            case LayerKind::action_tile: {
                const int c = in0()[0];
                const int a = nodes_[size_t(n.inputs[1])].out_shape[0];
                store.add(n.name + "/W", TensorT<T>({c, a}), true);
                store.add(n.name + "/b", TensorT<T>({c}), true);
                break;
            }
            default:
                break;
        }
    }
    return store;
}

template ParamStoreT<float> Graph::empty_params<float>() const;
template ParamStoreT<double> Graph::empty_params<double>() const;

ParamStore Graph::init_params(uint64_t seed) const {
    ParamStore store = empty_params<float>();
    Rng rng(derive_seed(seed, 0x9a7a));
    for (const auto& n : nodes_) {
        switch (n.spec.kind) {
            case LayerKind::dense:
            case LayerKind::conv2d:
            case LayerKind::action_tile: {
                auto& w = store.value(n.name + "/W");
                if (n.zero_init) {
                    w.zero();
                } else {
                    int fan_in = 1;
                    for (size_t d = 1; d < w.shape.size(); ++d) fan_in *= w.shape[d];
                    const float std = std::sqrt(2.f / float(fan_in));
                    for (auto& v : w.data) v = float(rng.normal(0.0, std));
                }
                break;
            }
            case LayerKind::batch_norm: {
                store.value(n.name + "/gamma").fill(1.f);
                store.value(n.name + "/run_var").fill(1.f);
                break;
            }
            default:
                break;
        }
    }
    return store;
}

// ---------------------------------------------------------------------------
// Executor

template <typename T>
ExecutorT<T>::ExecutorT(const Graph& g) : graph_(&g) {
    if (!g.finalized()) throw ShapeError("executor needs a finalized graph");
    act_.resize(size_t(g.size()));
    aux_.resize(size_t(g.size()));
    aux2_.resize(size_t(g.size()));
    grad_.resize(size_t(g.size()));
    computed_.assign(size_t(g.size()), 0);
}

namespace {

template <typename T>
void im2col(const T* x, int C, int H, int W, int kernel, int stride, int pad, int OH, int OW, T* col) {
    const int P = OH * OW;
    for (int c = 0; c < C; ++c) {
        const T* xc = x + size_t(c) * H * W;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* row = col + (size_t(c) * kernel * kernel + size_t(ky) * kernel + size_t(kx)) * P;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    T* dst = row + size_t(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + OW, T(0));
                        continue;
                    }
                    const T* src = xc + size_t(iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kernel, int stride, int pad, int OH, int OW,
                T* x) {
    const int P = OH * OW;
    for (int c = 0; c < C; ++c) {
        T* xc = x + size_t(c) * H * W;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* row = col + (size_t(c) * kernel * kernel + size_t(ky) * kernel + size_t(kx)) * P;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const T* src = row + size_t(oy) * OW;
                    T* dst = xc + size_t(iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void ExecutorT<T>::eval_node(int id, const ParamStoreT<T>& params, Mode mode, bool update_running) {
    const Node& n = graph_->node(id);
    TensorT<T>& out = act_[size_t(id)];
    const auto in = [&](size_t i) -> const TensorT<T>& { return act_[size_t(n.inputs[i])]; };

    switch (n.spec.kind) {
        case LayerKind::input:
            throw ShapeError("input node " + n.name + " was not provided");

        case LayerKind::dense: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0);
            const int F = int(x.size() / B);
            const int U = n.spec.units;
            const auto& W = params.value(n.name + "/W");
            const auto& b = params.value(n.name + "/b");
            if (W.dim(1) != F) throw ShapeError(n.name + ": dense input features mismatch");
            out.shape = {B, U};
            out.data.resize(size_t(B) * U);
            for (int i = 0; i < B; ++i)
                std::copy(b.data.begin(), b.data.end(), out.data.begin() + size_t(i) * U);
            gemm_nt(B, U, F, x.ptr(), W.ptr(), out.ptr());
            break;
        }

        case LayerKind::conv2d: {
            const TensorT<T>& x = in(0);
            if (x.rank() != 4) throw ShapeError(n.name + ": conv2d needs [B,C,H,W]");
            const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int pad = conv_pad(n.spec);
            const int OH = conv_out_dim(H, n.spec.kernel, n.spec.stride, pad);
            const int OW = conv_out_dim(W, n.spec.kernel, n.spec.stride, pad);
            const int OC = n.spec.out_channels;
            const int K = C * n.spec.kernel * n.spec.kernel;
            const int P = OH * OW;
            const auto& Wt = params.value(n.name + "/W");
            const auto& bias = params.value(n.name + "/b");
            if (Wt.dim(1) != C) throw ShapeError(n.name + ": conv2d channel mismatch");
            out.shape = {B, OC, OH, OW};
            out.data.resize(size_t(B) * OC * P);
            TensorT<T>& col = aux_[size_t(id)];
            col.shape = {B, K, P};
            col.data.resize(size_t(B) * K * P);
            for (int bI = 0; bI < B; ++bI) {
                T* colb = col.ptr() + size_t(bI) * K * P;
                im2col(x.ptr() + size_t(bI) * C * H * W, C, H, W, n.spec.kernel, n.spec.stride, pad, OH,
                       OW, colb);
                T* y = out.ptr() + size_t(bI) * OC * P;
                for (int oc = 0; oc < OC; ++oc)
                    std::fill(y + size_t(oc) * P, y + size_t(oc) * P + P, bias.data[size_t(oc)]);
                gemm(OC, P, K, Wt.ptr(), colb, y);
            }
            break;
        }

        case LayerKind::relu: {
            const TensorT<T>& x = in(0);
            out.shape = x.shape;
            out.data.resize(x.data.size());
            for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
            break;
        }

        case LayerKind::batch_norm: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0);
            const int C = x.dim(1);
            const int S = int(x.size() / (int64_t(B) * C));  // spatial extent (1 for dense)
            const bool train_stats = mode != Mode::Infer;
            if (train_stats && B < 2) throw ShapeError(n.name + ": batch_norm needs batch >= 2 in train mode");
            const auto& gamma = params.value(n.name + "/gamma");
            const auto& beta = params.value(n.name + "/beta");
            out.shape = x.shape;
            out.data.resize(x.data.size());
            TensorT<T>& xhat = aux_[size_t(id)];
            xhat.shape = x.shape;
            xhat.data.resize(x.data.size());
            TensorT<T>& invstd = aux2_[size_t(id)];
            invstd.shape = {C};
            invstd.data.resize(size_t(C));
            const int64_t rowstride = int64_t(C) * S;
            for (int c = 0; c < C; ++c) {
                T mean, var;
                if (train_stats) {
                    double sum = 0.0, sq = 0.0;
                    for (int bI = 0; bI < B; ++bI) {
                        const T* p = x.ptr() + bI * rowstride + int64_t(c) * S;
                        for (int s = 0; s < S; ++s) {
                            sum += double(p[s]);
                            sq += double(p[s]) * double(p[s]);
                        }
                    }
                    const double cnt = double(B) * S;
                    const double m = sum / cnt;
                    const double v = std::max(0.0, sq / cnt - m * m);
                    mean = T(m);
                    var = T(v);
                    if (update_running) {
                        auto& pm = const_cast<ParamStoreT<T>&>(params);
                        auto& rm = pm.value(n.name + "/run_mean");
                        auto& rv = pm.value(n.name + "/run_var");
                        const T mom = T(n.spec.momentum);
                        rm.data[size_t(c)] = mom * rm.data[size_t(c)] + (T(1) - mom) * mean;
                        rv.data[size_t(c)] = mom * rv.data[size_t(c)] + (T(1) - mom) * var;
                    }
                } else {
                    mean = params.value(n.name + "/run_mean").data[size_t(c)];
                    var = params.value(n.name + "/run_var").data[size_t(c)];
                }
                const T istd = T(1) / std::sqrt(var + T(n.spec.eps));
                invstd.data[size_t(c)] = istd;
                const T g = gamma.data[size_t(c)], be = beta.data[size_t(c)];
                for (int bI = 0; bI < B; ++bI) {
                    const T* p = x.ptr() + bI * rowstride + int64_t(c) * S;
                    T* xh = xhat.ptr() + bI * rowstride + int64_t(c) * S;
                    T* y = out.ptr() + bI * rowstride + int64_t(c) * S;
                    for (int s = 0; s < S; ++s) {
                        xh[s] = (p[s] - mean) * istd;
                        y[s] = g * xh[s] + be;
                    }
                }
            }
            break;
        }

        case LayerKind::softmax: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0), K = x.dim(1);
            out.shape = x.shape;
            out.data.resize(x.data.size());
            for (int bI = 0; bI < B; ++bI) {
                const T* p = x.ptr() + size_t(bI) * K;
                T* y = out.ptr() + size_t(bI) * K;
                T m = p[0];
                for (int k = 1; k < K; ++k) m = std::max(m, p[k]);
                double z = 0.0;
                for (int k = 0; k < K; ++k) {
                    y[k] = std::exp(p[k] - m);
                    z += double(y[k]);
                }
                const T inv = T(1.0 / z);
                for (int k = 0; k < K; ++k) y[k] *= inv;
            }
            break;
        }

        case LayerKind::sigmoid: {
            const TensorT<T>& x = in(0);
            out.shape = x.shape;
            out.data.resize(x.data.size());
            for (size_t i = 0; i < x.data.size(); ++i) {
                const T v = x.data[i];
                if (v >= T(0)) {
                    const T e = std::exp(-v);
                    out.data[i] = T(1) / (T(1) + e);
                } else {
                    const T e = std::exp(v);
                    out.data[i] = e / (T(1) + e);
                }
            }
            break;
        }

        case LayerKind::spatial_softmax: {
            const TensorT<T>& x = in(0);
            if (x.rank() != 4) throw ShapeError(n.name + ": spatial_softmax needs [B,C,H,W]");
            const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int HW = H * W;
            const T tau = T(n.spec.tau);
            out.shape = {B, 2 * C};
            out.data.resize(size_t(B) * 2 * C);
            TensorT<T>& s = aux_[size_t(id)];
            s.shape = x.shape;
            s.data.resize(x.data.size());
            for (int bI = 0; bI < B; ++bI) {
                for (int c = 0; c < C; ++c) {
                    const T* p = x.ptr() + (size_t(bI) * C + c) * HW;
                    T* sp = s.ptr() + (size_t(bI) * C + c) * HW;
                    T m = p[0];
                    for (int i = 1; i < HW; ++i) m = std::max(m, p[i]);
                    double z = 0.0;
                    for (int i = 0; i < HW; ++i) {
                        sp[i] = std::exp((p[i] - m) / tau);
                        z += double(sp[i]);
                    }
                    const T inv = T(1.0 / z);
                    double fx = 0.0, fy = 0.0;
                    for (int iy = 0; iy < H; ++iy) {
                        const double my = mesh_coord(iy, H);
                        for (int ix = 0; ix < W; ++ix) {
                            const T w = sp[iy * W + ix] * inv;
                            sp[iy * W + ix] = w;
                            fx += mesh_coord(ix, W) * double(w);
                            fy += my * double(w);
                        }
                    }
                    out.data[size_t(bI) * 2 * C + 2 * size_t(c)] = T(fx);
                    out.data[size_t(bI) * 2 * C + 2 * size_t(c) + 1] = T(fy);
                }
            }
            break;
        }

        case LayerKind::feature_normalize: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0), F = x.dim(1);
            out.shape = x.shape;
            out.data.resize(x.data.size());
            TensorT<T>& inv = aux2_[size_t(id)];
            inv.shape = {B};
            inv.data.resize(size_t(B));
            for (int bI = 0; bI < B; ++bI) {
                const T* p = x.ptr() + size_t(bI) * F;
                T* y = out.ptr() + size_t(bI) * F;
                double sum = 0.0, sq = 0.0;
                for (int f = 0; f < F; ++f) {
                    sum += double(p[f]);
                    sq += double(p[f]) * double(p[f]);
                }
                const double m = sum / F;
                const double v = std::max(0.0, sq / F - m * m);
                const T r = T(1.0 / std::sqrt(v + 1e-12));
                inv.data[size_t(bI)] = r;
                for (int f = 0; f < F; ++f) y[f] = (p[f] - T(m)) * r;
            }
            break;
        }

        case LayerKind::concat: {
            const int B = in(0).dim(0);
            int64_t total = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                if (in(i).dim(0) != B) throw ShapeError(n.name + ": concat batch mismatch");
                total += in(i).size() / B;
            }
            out.shape = {B};
            for (int d : n.out_shape) out.shape.push_back(d);
            out.data.resize(size_t(B) * size_t(total));
            for (int bI = 0; bI < B; ++bI) {
                T* dst = out.ptr() + size_t(bI) * total;
                for (size_t i = 0; i < n.inputs.size(); ++i) {
                    const int64_t len = in(i).size() / B;
                    std::memcpy(dst, in(i).ptr() + size_t(bI) * len, size_t(len) * sizeof(T));
                    dst += len;
                }
            }
            break;
        }

        case LayerKind::action_tile: {
            const TensorT<T>& x = in(0);
            const TensorT<T>& a = in(1);
            const int Bx = x.dim(0);
            const int B = a.dim(0);
            if (Bx != B && Bx != 1) throw ShapeError(n.name + ": map batch must be 1 or match action");
            const int C = x.dim(1);
            const int HW = x.dim(2) * x.dim(3);
            const int A = a.dim(1);
            const auto& W = params.value(n.name + "/W");
            const auto& b = params.value(n.name + "/b");
            TensorT<T>& e = aux_[size_t(id)];
            e.shape = {B, C};
            e.data.resize(size_t(B) * C);
            for (int i = 0; i < B; ++i)
                std::copy(b.data.begin(), b.data.end(), e.data.begin() + size_t(i) * C);
            gemm_nt(B, C, A, a.ptr(), W.ptr(), e.ptr());
            out.shape = {B, C, x.dim(2), x.dim(3)};
            out.data.resize(size_t(B) * C * HW);
            for (int bI = 0; bI < B; ++bI) {
                const T* xb = x.ptr() + size_t(Bx == 1 ? 0 : bI) * C * HW;
                T* y = out.ptr() + size_t(bI) * C * HW;
                for (int c = 0; c < C; ++c) {
                    const T ec = e.data[size_t(bI) * C + c];
                    const T* xc = xb + size_t(c) * HW;
                    T* yc = y + size_t(c) * HW;
                    for (int sIdx = 0; sIdx < HW; ++sIdx) yc[sIdx] = xc[sIdx] + ec;
                }
            }
            break;
        }
    }
    computed_[size_t(id)] = 1;
}

template <typename T>
void ExecutorT<T>::forward(const ParamStoreT<T>& params,
                           const std::map<std::string, const TensorT<T>*>& inputs) {
    std::fill(computed_.begin(), computed_.end(), 0);
    last_mode_ = Mode::Infer;
    for (int id = 0; id < graph_->size(); ++id) {
        const Node& n = graph_->node(id);
        if (n.spec.kind == LayerKind::input) {
            auto it = inputs.find(n.name);
            if (it == inputs.end()) throw ShapeError("missing input: " + n.name);
            act_[size_t(id)] = *it->second;
            computed_[size_t(id)] = 1;
        } else {
            eval_node(id, params, Mode::Infer, false);
        }
    }
    forward_done_ = true;
}

template <typename T>
void ExecutorT<T>::forward_train(ParamStoreT<T>& params,
                                 const std::map<std::string, const TensorT<T>*>& inputs, Mode mode) {
    std::fill(computed_.begin(), computed_.end(), 0);
    last_mode_ = mode;
    const bool update = mode == Mode::Train;
    for (int id = 0; id < graph_->size(); ++id) {
        const Node& n = graph_->node(id);
        if (n.spec.kind == LayerKind::input) {
            auto it = inputs.find(n.name);
            if (it == inputs.end()) throw ShapeError("missing input: " + n.name);
            act_[size_t(id)] = *it->second;
            computed_[size_t(id)] = 1;
        } else {
            eval_node(id, params, mode, update);
        }
    }
    forward_done_ = true;
}

template <typename T>
void ExecutorT<T>::forward_subset(const ParamStoreT<T>& params, const std::vector<int>& eval_order,
                                  const std::map<std::string, const TensorT<T>*>& inputs,
                                  const std::map<int, const TensorT<T>*>& pinned) {
    std::fill(computed_.begin(), computed_.end(), 0);
    last_mode_ = Mode::Infer;
    for (const auto& [id, t] : pinned) {
        act_[size_t(id)] = *t;
        computed_[size_t(id)] = 1;
    }
    for (const auto& [name, t] : inputs) {
        const int id = graph_->node_id(name);
        act_[size_t(id)] = *t;
        computed_[size_t(id)] = 1;
    }
    for (int id : eval_order) {
        if (computed_[size_t(id)]) continue;
        for (int in : graph_->node(id).inputs)
            if (!computed_[size_t(in)])
                throw ShapeError("forward_subset: input of " + graph_->node(id).name + " not available");
        eval_node(id, params, Mode::Infer, false);
    }
    forward_done_ = false;  // partial pass; backward is not valid
}

template <typename T>
void ExecutorT<T>::check_finite(const std::string& context) const {
    for (int id = 0; id < graph_->size(); ++id) {
        if (!computed_[size_t(id)]) continue;
        if (!act_[size_t(id)].all_finite())
            throw NumericError(context + ": non-finite values in node " + graph_->node(id).name);
    }
}

template <typename T>
void ExecutorT<T>::backward(ParamStoreT<T>& params, const std::map<int, const TensorT<T>*>& output_grads,
                            std::map<int, TensorT<T>>* input_grads) {
    if (!forward_done_) throw ShapeError("backward called without a full forward pass");
    for (int id = 0; id < graph_->size(); ++id) {
        if (!computed_[size_t(id)]) continue;
        grad_[size_t(id)].shape = act_[size_t(id)].shape;
        grad_[size_t(id)].data.assign(act_[size_t(id)].data.size(), T(0));
    }
    for (const auto& [id, g] : output_grads) {
        if (!g->same_shape(act_[size_t(id)]))
            throw ShapeError("output grad shape mismatch at node " + graph_->node(id).name);
        TensorT<T>& dst = grad_[size_t(id)];
        for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g->data[i];
    }
    for (int id = graph_->size() - 1; id >= 0; --id) {
        if (!computed_[size_t(id)]) continue;
        const Node& n = graph_->node(id);
        if (n.spec.kind == LayerKind::input) {
            if (input_grads) (*input_grads)[id] = grad_[size_t(id)];
            continue;
        }
        backward_node(id, params, params);
    }
}

template <typename T>
void ExecutorT<T>::backward_node(int id, const ParamStoreT<T>& params, ParamStoreT<T>& grads_into) {
    const Node& n = graph_->node(id);
    const TensorT<T>& dy = grad_[size_t(id)];
    const auto in = [&](size_t i) -> const TensorT<T>& { return act_[size_t(n.inputs[i])]; };
    const auto din = [&](size_t i) -> TensorT<T>& { return grad_[size_t(n.inputs[i])]; };

    switch (n.spec.kind) {
        case LayerKind::input:
            break;

        case LayerKind::dense: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0);
            const int F = int(x.size() / B);
            const int U = n.spec.units;
            const auto& W = params.value(n.name + "/W");
            auto& dW = grads_into.grad(n.name + "/W");
            auto& db = grads_into.grad(n.name + "/b");
            // dx += dy * W
            gemm(B, F, U, dy.ptr(), W.ptr(), din(0).ptr());
            // dW += dy^T * x
            gemm_tn(U, F, B, dy.ptr(), x.ptr(), dW.ptr());
            for (int bI = 0; bI < B; ++bI)
                for (int u = 0; u < U; ++u) db.data[size_t(u)] += dy.data[size_t(bI) * U + u];
            break;
        }

        case LayerKind::conv2d: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int pad = conv_pad(n.spec);
            const int OH = act_[size_t(id)].dim(2), OW = act_[size_t(id)].dim(3);
            const int OC = n.spec.out_channels;
            const int K = C * n.spec.kernel * n.spec.kernel;
            const int P = OH * OW;
            const auto& Wt = params.value(n.name + "/W");
            auto& dW = grads_into.grad(n.name + "/W");
            auto& db = grads_into.grad(n.name + "/b");
            const TensorT<T>& col = aux_[size_t(id)];
            thread_local std::vector<T> dcol;
            dcol.assign(size_t(K) * P, T(0));
            for (int bI = 0; bI < B; ++bI) {
                const T* dyb = dy.ptr() + size_t(bI) * OC * P;
                const T* colb = col.ptr() + size_t(bI) * K * P;
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const T* r = dyb + size_t(oc) * P;
                    for (int p = 0; p < P; ++p) s += double(r[p]);
                    db.data[size_t(oc)] += T(s);
                }
                gemm_nt(OC, K, P, dyb, colb, dW.ptr());
                std::fill(dcol.begin(), dcol.end(), T(0));
                gemm_tn(K, P, OC, Wt.ptr(), dyb, dcol.data());
                col2im_add(dcol.data(), C, H, W, n.spec.kernel, n.spec.stride, pad, OH, OW,
                           din(0).ptr() + size_t(bI) * C * H * W);
            }
            break;
        }

        case LayerKind::relu: {
            const TensorT<T>& x = in(0);
            TensorT<T>& dx = din(0);
            for (size_t i = 0; i < x.data.size(); ++i)
                if (x.data[i] > T(0)) dx.data[i] += dy.data[i];
            break;
        }

        case LayerKind::batch_norm: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0);
            const int C = x.dim(1);
            const int S = int(x.size() / (int64_t(B) * C));
            const auto& gamma = params.value(n.name + "/gamma");
            auto& dgamma = grads_into.grad(n.name + "/gamma");
            auto& dbeta = grads_into.grad(n.name + "/beta");
            const TensorT<T>& xhat = aux_[size_t(id)];
            const TensorT<T>& invstd = aux2_[size_t(id)];
            TensorT<T>& dx = din(0);
            const int64_t rowstride = int64_t(C) * S;
            const bool batch_stats = last_mode_ != Mode::Infer;
            const double cnt = double(B) * S;
            for (int c = 0; c < C; ++c) {
                double s1 = 0.0, s2 = 0.0;
                for (int bI = 0; bI < B; ++bI) {
                    const T* g = dy.ptr() + bI * rowstride + int64_t(c) * S;
                    const T* xh = xhat.ptr() + bI * rowstride + int64_t(c) * S;
                    for (int s = 0; s < S; ++s) {
                        s1 += double(g[s]);
                        s2 += double(g[s]) * double(xh[s]);
                    }
                }
                dbeta.data[size_t(c)] += T(s1);
                dgamma.data[size_t(c)] += T(s2);
                const T g0 = gamma.data[size_t(c)] * invstd.data[size_t(c)];
                const T m1 = T(s1 / cnt), m2 = T(s2 / cnt);
                for (int bI = 0; bI < B; ++bI) {
                    const T* g = dy.ptr() + bI * rowstride + int64_t(c) * S;
                    const T* xh = xhat.ptr() + bI * rowstride + int64_t(c) * S;
                    T* d = dx.ptr() + bI * rowstride + int64_t(c) * S;
                    if (batch_stats) {
                        for (int s = 0; s < S; ++s) d[s] += g0 * (g[s] - m1 - xh[s] * m2);
                    } else {
                        for (int s = 0; s < S; ++s) d[s] += g0 * g[s];
                    }
                }
            }
            break;
        }

        case LayerKind::softmax: {
            const TensorT<T>& y = act_[size_t(id)];
            const int B = y.dim(0), K = y.dim(1);
            TensorT<T>& dx = din(0);
            for (int bI = 0; bI < B; ++bI) {
                const T* yr = y.ptr() + size_t(bI) * K;
                const T* gr = dy.ptr() + size_t(bI) * K;
                T* dr = dx.ptr() + size_t(bI) * K;
                double dot = 0.0;
                for (int k = 0; k < K; ++k) dot += double(yr[k]) * double(gr[k]);
                for (int k = 0; k < K; ++k) dr[k] += yr[k] * (gr[k] - T(dot));
            }
            break;
        }

        case LayerKind::sigmoid: {
            const TensorT<T>& y = act_[size_t(id)];
            TensorT<T>& dx = din(0);
            for (size_t i = 0; i < y.data.size(); ++i)
                dx.data[i] += dy.data[i] * y.data[i] * (T(1) - y.data[i]);
            break;
        }

        case LayerKind::spatial_softmax: {
            const TensorT<T>& x = in(0);
            const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
            const int HW = H * W;
            const T tau = T(n.spec.tau);
            const TensorT<T>& s = aux_[size_t(id)];
            TensorT<T>& dx = din(0);
            for (int bI = 0; bI < B; ++bI) {
                for (int c = 0; c < C; ++c) {
                    const T dfx = dy.data[size_t(bI) * 2 * C + 2 * size_t(c)];
                    const T dfy = dy.data[size_t(bI) * 2 * C + 2 * size_t(c) + 1];
                    const T* sp = s.ptr() + (size_t(bI) * C + c) * HW;
                    T* d = dx.ptr() + (size_t(bI) * C + c) * HW;
                    double dot = 0.0;
                    for (int iy = 0; iy < H; ++iy) {
                        const double my = mesh_coord(iy, H);
                        for (int ix = 0; ix < W; ++ix) {
                            const double gs = double(dfx) * mesh_coord(ix, W) + double(dfy) * my;
                            dot += gs * double(sp[iy * W + ix]);
                        }
                    }
                    for (int iy = 0; iy < H; ++iy) {
                        const double my = mesh_coord(iy, H);
                        for (int ix = 0; ix < W; ++ix) {
                            const double gs = double(dfx) * mesh_coord(ix, W) + double(dfy) * my;
                            d[iy * W + ix] += T(double(sp[iy * W + ix]) * (gs - dot) / double(tau));
                        }
                    }
                }
            }
            break;
        }

        case LayerKind::feature_normalize: {
            const TensorT<T>& y = act_[size_t(id)];
            const int B = y.dim(0), F = y.dim(1);
            const TensorT<T>& inv = aux2_[size_t(id)];
            TensorT<T>& dx = din(0);
            for (int bI = 0; bI < B; ++bI) {
                const T* yr = y.ptr() + size_t(bI) * F;
                const T* gr = dy.ptr() + size_t(bI) * F;
                T* dr = dx.ptr() + size_t(bI) * F;
                double m1 = 0.0, m2 = 0.0;
                for (int f = 0; f < F; ++f) {
                    m1 += double(gr[f]);
                    m2 += double(gr[f]) * double(yr[f]);
                }
                m1 /= F;
                m2 /= F;
                const T r = inv.data[size_t(bI)];
                for (int f = 0; f < F; ++f) dr[f] += r * (gr[f] - T(m1) - yr[f] * T(m2));
            }
            break;
        }

        case LayerKind::concat: {
            const int B = dy.dim(0);
            const int64_t total = dy.size() / B;
            for (int bI = 0; bI < B; ++bI) {
                const T* src = dy.ptr() + size_t(bI) * total;
                for (size_t i = 0; i < n.inputs.size(); ++i) {
                    TensorT<T>& dx = din(i);
                    const int64_t len = dx.size() / B;
                    T* dst = dx.ptr() + size_t(bI) * len;
                    for (int64_t k = 0; k < len; ++k) dst[k] += src[k];
                    src += len;
                }
            }
            break;
        }

        case LayerKind::action_tile: {
            const TensorT<T>& x = in(0);
            const TensorT<T>& a = in(1);
            const int Bx = x.dim(0);
            const int B = a.dim(0);
            const int C = x.dim(1);
            const int HW = x.dim(2) * x.dim(3);
            const int A = a.dim(1);
            const auto& W = params.value(n.name + "/W");
            auto& dW = grads_into.grad(n.name + "/W");
            auto& db = grads_into.grad(n.name + "/b");
            TensorT<T>& dx = din(0);
            TensorT<T>& da = din(1);
            thread_local std::vector<T> de;
            de.assign(size_t(B) * C, T(0));
            for (int bI = 0; bI < B; ++bI) {
                const T* g = dy.ptr() + size_t(bI) * C * HW;
                T* dxb = dx.ptr() + size_t(Bx == 1 ? 0 : bI) * C * HW;
                for (int c = 0; c < C; ++c) {
                    double s = 0.0;
                    const T* gc = g + size_t(c) * HW;
                    T* dxc = dxb + size_t(c) * HW;
                    for (int k = 0; k < HW; ++k) {
                        s += double(gc[k]);
                        dxc[k] += gc[k];
                    }
                    de[size_t(bI) * C + c] = T(s);
                }
            }
            for (int bI = 0; bI < B; ++bI)
                for (int c = 0; c < C; ++c) db.data[size_t(c)] += de[size_t(bI) * C + c];
            // dW += de^T * a ; da += de * W
            gemm_tn(C, A, B, de.data(), a.ptr(), dW.ptr());
            gemm(B, A, C, de.data(), W.ptr(), da.ptr());
            break;
        }
    }
}

template class ExecutorT<float>;
template class ExecutorT<double>;

}  // namespace semgrasp
