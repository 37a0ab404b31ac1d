#include "s2m2/tensor.hpp"

#include <unordered_set>

namespace s2m2 {

void backward(const Tensor& loss, bool release_graph) {
    if (!loss.defined() || loss.size() != 1)
        throw shape_error("backward() requires a scalar loss node");
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS. order holds strong references so that
    // releasing a consumer's links cannot destroy a producer mid-sweep.
    std::vector<std::shared_ptr<detail::Node>> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        std::shared_ptr<detail::Node> n;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            auto& p = f.n->parents[f.next_parent++];
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    // Post-order emits producers before consumers, so the reversed order is a
    // valid reverse-topological sweep; each node is visited exactly once.
    root->grad_buf()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = it->get();
        if (n->backprop) n->backprop();
        if (release_graph && !n->is_leaf) {
            // Consumers of this node ran already; nothing reads it after here.
            n->grad.clear();
            n->grad.shrink_to_fit();
            n->value.clear();
            n->value.shrink_to_fit();
            n->backprop = nullptr;
            n->parents.clear();
        }
    }
}

}  // namespace s2m2
