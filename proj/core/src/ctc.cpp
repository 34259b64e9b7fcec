#include "prosody/ctc.hpp"

namespace prosody {

Value ctc_loss_node(Tape& tape, Value logits, const std::vector<int>& target) {
  return tape.ctc_nll(tape.log_softmax_rows(logits), target);
}

double ctc_loss(const Tensor& logits, const std::vector<int>& target) {
  Tape tape;
  return ctc_loss_node(tape, tape.input(logits), target).val()[0];
}

std::vector<int> ctc_greedy_decode(const Tensor& logits) {
  std::vector<int> out;
  int prev = 0;
  for (int t = 0; t < logits.rows(); ++t) {
    int best = 0;
    for (int c = 1; c < logits.cols(); ++c) {
      if (logits.at(t, c) > logits.at(t, best)) best = c;
    }
    if (best != 0 && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

}  // namespace prosody
