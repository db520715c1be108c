#pragma once

#include <limits>

#include "pptr/model/clip.hpp"
#include "pptr/model/weights.hpp"

namespace pptr::model {

/// The offset-and-pool part of the 4D convolution. With G = feats * Wf^T
/// already projected, anchor a gets, per channel,
///   sum over its temporal slots of  max over slot neighbours j of
///   (Wd * delta_aj + G_j).
/// The gradient of each max goes to the first neighbour (lowest row)
/// attaining it. The graph is referenced by the tape, so it must outlive
/// any backward pass.
inline Var offset_max_sum(Var projected, Var wd, const ConvGraph& graph) {
  const Tensor& G = projected.value();
  const Tensor& W = wd.value();
  const std::size_t C = G.cols();
  if (W.rows() != C || W.cols() != 4) throw Error(Errc::LengthMismatch, "Wd must be C x 4");
  const std::size_t A = graph.num_anchors();
  Tensor out = Tensor::matrix(A, C);
  const std::size_t slots = graph.slot_begin.size() - 1;
  std::vector<std::size_t> arg(slots * C);
  for (std::size_t a = 0; a < A; ++a) {
    for (std::size_t s = graph.anchor_begin[a]; s < graph.anchor_begin[a + 1]; ++s) {
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_e = graph.slot_begin[s];
        for (std::size_t e = graph.slot_begin[s]; e < graph.slot_begin[s + 1]; ++e) {
          const auto& d = graph.delta[e];
          const double v = (W(c, 0) * d[0] + W(c, 1) * d[1] + W(c, 2) * d[2] + W(c, 3) * d[3]) +
                           G(graph.neighbor[e], c);
          if (v > best) {
            best = v;
            best_e = e;
          }
        }
        out(a, c) += best;
        arg[s * C + c] = best_e;
      }
    }
  }
  Tape& tape = *projected.tape;
  const bool grad = projected.requires_grad() || wd.requires_grad();
  return tape.push(std::move(out), grad, [projected, wd, &graph, arg = std::move(arg), C](Tape& t, const Tensor& g) {
    Tensor gG(projected.value().shape());
    Tensor gW(wd.value().shape());
    for (std::size_t a = 0; a < graph.num_anchors(); ++a)
      for (std::size_t s = graph.anchor_begin[a]; s < graph.anchor_begin[a + 1]; ++s)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t e = arg[s * C + c];
          const double go = g(a, c);
          gG(graph.neighbor[e], c) += go;
          for (std::size_t k = 0; k < 4; ++k) gW(c, k) += go * graph.delta[e][k];
        }
    t.accumulate(projected, gG);
    t.accumulate(wd, gW);
  });
}

/// One 4D point convolution layer (no activation): per-point output,
/// upsampled from the nearest anchor when the graph is strided.
inline Var point4d_conv(Var feats, Var wd, Var wf, const ConvGraph& graph) {
  Var projected = ad::matmul(feats, ad::transpose(wf));
  Var out = offset_max_sum(projected, wd, graph);
  if (!graph.upsample.empty()) out = ad::gather_rows(out, graph.upsample);
  return out;
}

/// The convolution backbone: every layer followed by GELU.
inline Var conv_stack(Var input, const Clip& clip, const BoundWeights& w, const PPTrConfig& cfg) {
  Var x = input;
  for (std::size_t l = 0; l < cfg.conv_layers; ++l) {
    const std::string p = "conv." + std::to_string(l);
    x = ad::gelu(point4d_conv(x, w[p + ".wd"], w[p + ".wf"], clip.graph));
  }
  return x;
}

}  // namespace pptr::model
