#pragma once

// Minimal reverse-mode tape over the ops in ops.hpp. Nodes are appended in
// evaluation order, so a single reverse sweep visits them topologically.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cglo/ops.hpp"
#include "cglo/tensor.hpp"

namespace cglo {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = 0;
};

class Tape {
public:
    Var leaf(std::string name, Tensor value) {
        for (const auto& n : nodes_) {
            if (!n.name.empty() && n.name == name) throw ShapeError("duplicate leaf '" + name + "'");
        }
        return push(std::move(value), {}, std::move(name));
    }

    /// Unnamed input that never receives a gradient request.
    Var constant(Tensor value) { return push(std::move(value), {}, {}); }

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var dense(Var input, Var weight, Var bias) {
        Tensor out = ops::dense(value(input), value(weight), value(bias));
        return push(std::move(out), [input, weight, bias](Tape& t, const Tensor& g) {
            auto gr = ops::dense_vjp(t.value(input), t.value(weight), g);
            t.accumulate(input, gr.input);
            t.accumulate(weight, gr.weight);
            t.accumulate(bias, gr.bias);
        });
    }

    Var conv_transpose2d(Var input, Var kernel, Var bias, ops::ConvTransposeGeometry geom) {
        Tensor out = ops::conv_transpose2d(value(input), value(kernel), value(bias), geom);
        return push(std::move(out), [input, kernel, bias, geom](Tape& t, const Tensor& g) {
            auto gr = ops::conv_transpose2d_vjp(t.value(input), t.value(kernel), g, geom);
            t.accumulate(input, gr.input);
            t.accumulate(kernel, gr.kernel);
            t.accumulate(bias, gr.bias);
        });
    }

    Var relu(Var x) {
        return push(ops::relu(value(x)), [x](Tape& t, const Tensor& g) { t.accumulate(x, ops::relu_vjp(t.value(x), g)); });
    }

    Var tanh(Var x) {
        const std::size_t self = nodes_.size();
        return push(ops::tanh(value(x)), [x, self](Tape& t, const Tensor& g) {
            t.accumulate(x, ops::tanh_vjp(t.nodes_[self].value, g));
        });
    }

    Var reshape(Var x, Shape shape) {
        const Shape original = value(x).shape();
        return push(value(x).reshaped(std::move(shape)),
                    [x, original](Tape& t, const Tensor& g) { t.accumulate(x, g.reshaped(original)); });
    }

    /// Concatenates two rank-1 tensors.
    Var concat(Var a, Var b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (ta.rank() != 1 || tb.rank() != 1) {
            throw ShapeError("concat: expected vectors, got " + shape_str(ta.shape()) + " and " + shape_str(tb.shape()));
        }
        std::vector<Real> joined(ta.values());
        joined.insert(joined.end(), tb.values().begin(), tb.values().end());
        const std::size_t na = ta.size(), nb = tb.size();
        return push(Tensor({na + nb}, std::move(joined)), [a, b, na, nb](Tape& t, const Tensor& g) {
            std::vector<Real> ga(g.values().begin(), g.values().begin() + static_cast<long>(na));
            std::vector<Real> gb(g.values().begin() + static_cast<long>(na), g.values().end());
            t.accumulate(a, Tensor({na}, std::move(ga)));
            t.accumulate(b, Tensor({nb}, std::move(gb)));
        });
    }

    /// Mean L1 distance to a fixed target; produces a scalar node.
    Var l1_loss(Var x, const Tensor& target) {
        const Real loss = ops::l1_loss(value(x), target);
        return push(Tensor({1}, std::vector<Real>{loss}), [x, target](Tape& t, const Tensor& g) {
            t.accumulate(x, ops::l1_loss_vjp(t.value(x), target, g[0]));
        });
    }

    /// Reverse sweep from a scalar node. Every name in `wrt` must be a leaf
    /// on this tape; leaves the loss does not reach get a zero gradient.
    Gradients backward(Var loss, const std::vector<std::string>& wrt) {
        if (value(loss).size() != 1) {
            throw ShapeError("backward: loss must be scalar, got " + shape_str(value(loss).shape()));
        }
        std::vector<std::size_t> wanted;
        for (const auto& name : wrt) {
            std::size_t found = nodes_.size();
            for (std::size_t i = 0; i < nodes_.size(); ++i) {
                if (nodes_[i].name == name) found = i;
            }
            if (found == nodes_.size()) throw ShapeError("backward: '" + name + "' is not a leaf of this graph");
            wanted.push_back(found);
        }

        for (auto& n : nodes_) n.grad = Tensor();
        nodes_[loss.id].grad = Tensor({1}, 1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.grad.size() == 0 || !n.backprop) continue;
            n.backprop(*this, n.grad);
        }

        Gradients out;
        for (std::size_t k = 0; k < wrt.size(); ++k) {
            const auto& n = nodes_[wanted[k]];
            out.add(wrt[k], n.grad.size() ? n.grad : Tensor(n.value.shape()));
        }
        return out;
    }

private:
    using Backprop = std::function<void(Tape&, const Tensor&)>;

    struct Node {
        Tensor value;
        Tensor grad;
        Backprop backprop;
        std::string name;
    };

    Var push(Tensor value, Backprop backprop, std::string name = {}) {
        nodes_.push_back(Node{std::move(value), Tensor(), std::move(backprop), std::move(name)});
        return Var{nodes_.size() - 1};
    }

    void accumulate(Var v, const Tensor& g) {
        auto& slot = nodes_[v.id].grad;
        if (slot.size() == 0) {
            slot = g;
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
    }

    std::vector<Node> nodes_;
};

}  // namespace cglo
