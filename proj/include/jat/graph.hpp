#ifndef JAT_GRAPH_HPP_
#define JAT_GRAPH_HPP_

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "jat/tensor.hpp"
#include "jat/util.hpp"

namespace jat {

// Named trainable leaves. Gradients accumulate here across backward calls,
// which is what gradient accumulation over micro-batches relies on.
template <typename T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
        bool trainable = true;
    };

    int add(const std::string& name, Tensor<T> value, bool trainable = true) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        Entry e;
        e.name = name;
        e.grad = Tensor<T>::zeros(value.shape);
        e.value = std::move(value);
        e.trainable = trainable;
        entries_.push_back(std::move(e));
        index_[name] = static_cast<int>(entries_.size()) - 1;
        return index_[name];
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Entry& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
        return entries_[static_cast<size_t>(it->second)];
    }

    const Entry& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("ParamStore: unknown parameter " + name);
        return entries_[static_cast<size_t>(it->second)];
    }

    // insertion order; deterministic for optimizer sweeps and checkpoints
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grad() {
        for (auto& e : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Reverse-mode tape. Nodes are appended in creation order, so parents always
// precede children and the reverse sweep visits each node exactly once.
template <typename T>
class Graph {
public:
    using Var = int;
    using BackwardFn = std::function<void(Graph&, Var)>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated lazily during backward
        std::vector<Var> parents;
        BackwardFn backward;
        bool requires_grad = false;
        bool grad_ready = false;
        const char* op = "leaf";
        int param_index = -1;  // >= 0 for parameter leaves
    };

    explicit Graph(ParamStore<T>* params = nullptr) : params_(params) {}

    ParamStore<T>* params() { return params_; }

    Var constant(Tensor<T> v) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = false;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    // differentiable leaf that is not a named parameter (used by input audits)
    Var input(Tensor<T> v) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    // Parameter leaf. The same name always yields the same node within one
    // graph, so shared parameters are shared by construction.
    Var param(const std::string& name) {
        if (!params_) throw std::logic_error("Graph::param: no ParamStore attached");
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return it->second;
        auto& entry = params_->at(name);
        Node n;
        n.value = entry.value;
        n.requires_grad = entry.trainable;
        n.op = "param";
        // param_index keyed by position in the store's entry list
        int idx = 0;
        for (const auto& e : params_->entries()) {
            if (e.name == name) break;
            ++idx;
        }
        n.param_index = idx;
        nodes_.push_back(std::move(n));
        const Var v = static_cast<Var>(nodes_.size()) - 1;
        param_nodes_[name] = v;
        return v;
    }

    Var emit(Tensor<T> value, std::vector<Var> parents, BackwardFn backward, const char* op) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        for (Var p : n.parents) {
            if (p < 0 || p >= static_cast<Var>(nodes_.size())) throw std::logic_error("Graph::emit: bad parent id");
            if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
        }
        n.backward = std::move(backward);
        n.op = op;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size()) - 1;
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }

    // gradient buffer of a node, allocating zeros on first touch
    Tensor<T>& grad(Var v) {
        Node& n = node(v);
        if (!n.grad_ready) {
            n.grad = Tensor<T>::zeros(n.value.shape);
            n.grad_ready = true;
        }
        return n.grad;
    }

    bool has_grad(Var v) const { return node(v).grad_ready; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    // Reverse sweep from a scalar loss. Gradients of trainable parameter
    // leaves are accumulated into the attached ParamStore; leaves that the
    // loss does not reach keep their existing (zero) gradient.
    void backward(Var loss) {
        Node& root = node(loss);
        if (root.value.numel() != 1) {
            throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(root.value.shape));
        }
        grad(loss)[0] = T(1);
        for (Var v = loss; v >= 0; --v) {
            Node& n = node(v);
            if (!n.requires_grad || !n.grad_ready) continue;
            if (n.backward) n.backward(*this, v);
            if (n.param_index >= 0 && params_) {
                auto& entry = params_->entries()[static_cast<size_t>(n.param_index)];
                if (entry.trainable) {
                    auto& acc = entry.grad.data;
                    const auto& g = n.grad.data;
                    for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
                }
            }
        }
    }

    // convenience: gradient of every trainable parameter as a name-keyed map
    std::map<std::string, Tensor<T>> backward_grad_map(Var loss) {
        if (!params_) throw std::logic_error("backward_grad_map: no ParamStore attached");
        params_->zero_grad();
        backward(loss);
        std::map<std::string, Tensor<T>> out;
        for (const auto& e : params_->entries()) {
            if (e.trainable) out[e.name] = e.grad;
        }
        return out;
    }

    size_t size() const { return nodes_.size(); }

private:
    Node& node(Var v) {
        if (v < 0 || v >= static_cast<Var>(nodes_.size())) throw std::out_of_range("Graph: bad node id");
        return nodes_[static_cast<size_t>(v)];
    }
    const Node& node(Var v) const {
        if (v < 0 || v >= static_cast<Var>(nodes_.size())) throw std::out_of_range("Graph: bad node id");
        return nodes_[static_cast<size_t>(v)];
    }

    std::vector<Node> nodes_;
    ParamStore<T>* params_ = nullptr;
    std::unordered_map<std::string, Var> param_nodes_;
};

// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps), the audit
// oracle every backward implementation is checked against.
template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps) {
    if (!(eps > T(0))) throw std::invalid_argument("finite_difference_gradient: eps must be positive");
    Tensor<T> g = Tensor<T>::zeros(x.shape);
    Tensor<T> probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const T saved = probe[i];
        probe[i] = saved + eps;
        const T hi = f(probe);
        probe[i] = saved - eps;
        const T lo = f(probe);
        probe[i] = saved;
        g[i] = (hi - lo) / (T(2) * eps);
    }
    return g;
}

}  // namespace jat

#endif  // JAT_GRAPH_HPP_
