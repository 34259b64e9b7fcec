#pragma once

#include <vector>

#include "prosody/tape.hpp"
#include "prosody/tensor.hpp"

namespace prosody {

/// CTC negative log likelihood of `target` under `logits` (t x (c+1), blank
/// at class 0): -log of the summed probability of every blank-augmented
/// alignment that collapses to the target, via the forward dynamic program
/// in log space. Throws InfeasibleTargetError when the target cannot fit in
/// t frames.
double ctc_loss(const Tensor& logits, const std::vector<int>& target);

/// Differentiable version; composes log-softmax with the CTC lattice.
Value ctc_loss_node(Tape& tape, Value logits, const std::vector<int>& target);

/// Greedy best-path decode: per-frame argmax, then collapse repeats and
/// remove blanks.
std::vector<int> ctc_greedy_decode(const Tensor& logits);

}  // namespace prosody
