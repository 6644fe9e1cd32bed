#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "strand/tensor.hpp"

namespace strand::ad {

// Define-by-run reverse-mode tape over dense double tensors. A Graph is built
// fresh for every forward pass; node ids are topologically ordered by
// construction, so backward() is a single reverse sweep. All inner loops sit
// on the dispatched kernels (see strand/kernels.hpp).
class Graph {
 public:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Graph&)> vjp;  // null for leaves
  };

  // Inputs and parameters. Gradients accumulate in grad(id) after backward().
  int leaf(Tensor value);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  // x [T,d] + row vector b [d]
  int add_bias(int x, int b);

  int matmul(int a, int b);     // a [m,k] * b [k,n]
  int matmul_nt(int a, int b);  // a [m,k] * b [n,k]^T

  int layer_norm(int x, int gain, int bias, double eps = 1e-5);
  int gelu(int x);

  // Rotary rotation of the leading rot_dims dims of each head, angle driven by
  // the per-row position index. rot_dims must be even.
  int rope(int x, const std::vector<std::int64_t>& positions, std::size_t n_heads,
           std::size_t rot_dims, double base = 10000.0);

  int slice_cols(int x, std::size_t c0, std::size_t w);
  int concat_cols(const std::vector<int>& xs);
  int concat_rows(const std::vector<int>& xs);
  int select_rows(int x, const std::vector<std::size_t>& idx);

  // Row gather from an embedding table; ids equal to zero_id produce a zero
  // row and receive no gradient (pad embeds to the zero vector).
  int embed(int table, const std::vector<int>& ids, int zero_id);

  // Row softmax over allowed entries (row-major mask, 1 = allowed). A row with
  // no allowed entries yields all zeros and propagates no gradient.
  int masked_softmax_rows(int x, const std::vector<std::uint8_t>& allowed);

  // Sum of cross-entropy over rows whose target is not ignore_id; scalar node.
  int cross_entropy_sum(int logits, const std::vector<int>& targets, int ignore_id);

  // Scalar sum of all entries.
  int sum_all(int x);

  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Tensor& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  // Seeds d(root)=1 and runs the reverse sweep. root must be scalar.
  void backward(int root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  int push(Tensor value, std::function<void(Graph&)> vjp);
  std::vector<Node> nodes_;
};

}  // namespace strand::ad
