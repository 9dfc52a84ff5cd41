#pragma once

#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "localtrans/tensor.hpp"

namespace localtrans {

class Tape;

// Handle to a forward value recorded on a tape.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& t() const;
};

// Reverse-mode tape. Node i produces value i; inputs always have smaller ids,
// so creation order is a topological order and the backward sweep is a single
// reverse pass. Gradients accumulate additively across fan-out.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int)>;

    Value leaf(Tensor t) {
        values_.push_back(std::move(t));
        nodes_.push_back(Node{});
        grads_.emplace_back();
        return Value{this, static_cast<int>(values_.size()) - 1};
    }

    Value make(Tensor out, std::vector<int> inputs, BackwardFn bwd, bool always_run = false) {
        values_.push_back(std::move(out));
        Node n;
        n.inputs = std::move(inputs);
        n.backward = std::move(bwd);
        n.always_run = always_run;
        nodes_.push_back(std::move(n));
        grads_.emplace_back();
        return Value{this, static_cast<int>(values_.size()) - 1};
    }

    const Tensor& value(int id) const { return values_[static_cast<std::size_t>(id)]; }
    Tensor& mutable_value(int id) { return values_[static_cast<std::size_t>(id)]; }

    bool has_grad(int id) const { return !grads_[static_cast<std::size_t>(id)].empty(); }

    // Gradient buffer for value `id`, zero-initialized on first touch.
    Tensor& grad(int id) {
        Tensor& g = grads_[static_cast<std::size_t>(id)];
        if (g.empty()) g.reset(values_[static_cast<std::size_t>(id)].shape());
        return g;
    }

    bool is_leaf(int id) const { return !nodes_[static_cast<std::size_t>(id)].backward; }

    // Reverse sweep from a scalar root. Intermediate values and gradients are
    // released as soon as the sweep has passed them; leaves keep both so
    // parameter gradients remain readable afterwards.
    void backward(const Value& root, bool release_intermediates = true) {
        if (root.tape != this) throw Error("backward: value belongs to another tape");
        if (value(root.id).size() != 1) throw ShapeError("backward: root must be scalar, got " + value(root.id).shape_str());
        grad(root.id)[0] += scalar(1);
        for (int id = root.id; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.backward && (has_grad(id) || n.always_run)) {
                (void)grad(id); // make sure the buffer exists even on always_run
                n.backward(*this, id);
            }
            if (release_intermediates && n.backward && id != root.id) {
                values_[static_cast<std::size_t>(id)].release();
                grads_[static_cast<std::size_t>(id)].release();
                n.backward = nullptr;
            }
        }
    }

    void clear() {
        values_.clear();
        grads_.clear();
        nodes_.clear();
    }

    std::size_t num_values() const { return values_.size(); }

private:
    struct Node {
        std::vector<int> inputs;
        BackwardFn backward; // empty for leaves
        bool always_run = false;
    };

    // deques: growing the tape never invalidates references handed out by
    // value()/grad(), which ops hold while recording new nodes
    std::deque<Tensor> values_;
    std::deque<Tensor> grads_;
    std::deque<Node> nodes_;
};

inline const Tensor& Value::t() const { return tape->value(id); }

// Named tensor with a gradient accumulator, the unit of checkpointing.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    int tape_id = -1;

    Parameter() = default;
    Parameter(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), trainable(train) {
        grad.reset(value.shape());
    }

    void zero_grad() { grad.fill(0); }
};

// Puts a parameter on the tape as a leaf for one forward/backward pass.
inline Value use(Tape& tape, Parameter& p) {
    Value v = tape.leaf(p.value.clone());
    p.tape_id = v.id;
    return v;
}

// Accumulates this pass's gradient back into the parameter.
inline void collect_grad(Tape& tape, Parameter& p) {
    if (p.tape_id < 0) return;
    if (tape.has_grad(p.tape_id)) {
        const Tensor& g = tape.grad(p.tape_id);
        for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
    }
    p.tape_id = -1;
}

} // namespace localtrans
