#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "semgrasp/errors.hpp"
#include "semgrasp/tensor.hpp"

namespace semgrasp {

/// Named parameter tensors with insertion-stable order. Trainable entries
/// carry a gradient slot of identical shape; running statistics are stored
/// as non-trainable entries.
template <typename T>
class ParamStoreT {
public:
    struct Entry {
        std::string name;
        TensorT<T> value;
        TensorT<T> grad;  // empty for non-trainable entries
        bool trainable = true;
    };

    int add(const std::string& name, TensorT<T> value, bool trainable) {
        if (index_.count(name)) throw ShapeError("duplicate parameter: " + name);
        Entry e;
        e.name = name;
        e.grad = trainable ? TensorT<T>(value.shape) : TensorT<T>();
        e.value = std::move(value);
        e.trainable = trainable;
        index_[name] = int(entries_.size());
        entries_.push_back(std::move(e));
        return int(entries_.size()) - 1;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    int index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
        return it->second;
    }

    TensorT<T>& value(const std::string& name) { return entries_[size_t(index_of(name))].value; }
    const TensorT<T>& value(const std::string& name) const {
        return entries_[size_t(index_of(name))].value;
    }
    TensorT<T>& grad(const std::string& name) { return entries_[size_t(index_of(name))].grad; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t size() const { return entries_.size(); }

    void zero_grads() {
        for (auto& e : entries_)
            if (e.trainable) e.grad.zero();
    }

    template <typename U>
    ParamStoreT<U> cast() const {
        ParamStoreT<U> out;
        for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.trainable);
        return out;
    }

    /// Copies values (not grads) from another store with identical layout.
    void copy_values_from(const ParamStoreT& other) {
        if (other.size() != size()) throw ShapeError("param store layout mismatch");
        for (size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name ||
                entries_[i].value.shape != other.entries_[i].value.shape)
                throw ShapeError("param store layout mismatch at " + entries_[i].name);
            entries_[i].value.data = other.entries_[i].value.data;
        }
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

using ParamStore = ParamStoreT<float>;
using ParamStoreD = ParamStoreT<double>;

}  // namespace semgrasp
