#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nd/core/errors.hpp"
#include "nd/decomp/model.hpp"

namespace nd::decomp {

/// Rows of `x` (D x N) belonging to term `t`.
inline Eigen::MatrixXd gather_inputs(const Eigen::MatrixXd& x, const TermIndex& t) {
  return x(t.coords(), Eigen::all);
}

struct DecodePass {
  std::vector<nn::ForwardCache> caches;
  std::vector<Eigen::MatrixXd> term_outputs;  // unmasked, P x N each
  Eigen::MatrixXd output;                     // P x N
};

struct DecodeGrad {
  std::vector<nn::GradientTape> terms;
  Eigen::VectorXd intercept;
  Eigen::MatrixXd input;  // D x N
  Eigen::MatrixXd mask;   // P x T, empty when decoded without masks
};

/// output = f0 + sum_k mask(:,k) .* f_k(x_k). `mask` is P x T or null (all ones).
inline DecodePass decode_forward(const DecompositionModel& model, const Eigen::MatrixXd& x,
                                 const Eigen::MatrixXd* mask = nullptr) {
  if (x.rows() != model.input_dim())
    throw ShapeError("decode: expected " + std::to_string(model.input_dim()) + " input rows, got " +
                     std::to_string(x.rows()));
  const auto nterms = static_cast<Eigen::Index>(model.terms.size());
  if (mask && (mask->rows() != model.features() || mask->cols() != nterms))
    throw ShapeError("decode: mask must be P x T");
  DecodePass pass;
  pass.caches.resize(model.terms.size());
  pass.term_outputs.resize(model.terms.size());
  pass.output = model.intercept.replicate(1, x.cols());
  for (std::size_t k = 0; k < model.terms.size(); ++k) {
    const auto& term = model.terms[k];
    pass.term_outputs[k] = term.net.forward(gather_inputs(x, term.index), pass.caches[k]);
    if (mask)
      pass.output.array() += pass.term_outputs[k].array().colwise() *
                             mask->col(static_cast<Eigen::Index>(k)).array();
    else
      pass.output += pass.term_outputs[k];
  }
  return pass;
}

inline DecodeGrad decode_backward(const DecompositionModel& model, const DecodePass& pass,
                                  const Eigen::MatrixXd& upstream,
                                  const Eigen::MatrixXd* mask = nullptr) {
  if (upstream.rows() != model.features() || upstream.cols() != pass.output.cols())
    throw ShapeError("decode_backward: upstream must match decoded output");
  DecodeGrad g;
  g.intercept = upstream.rowwise().sum();
  g.input = Eigen::MatrixXd::Zero(model.input_dim(), upstream.cols());
  if (mask) g.mask.resize(model.features(), static_cast<Eigen::Index>(model.terms.size()));
  g.terms.reserve(model.terms.size());
  for (std::size_t k = 0; k < model.terms.size(); ++k) {
    const auto& term = model.terms[k];
    const auto col = static_cast<Eigen::Index>(k);
    Eigen::MatrixXd up;
    if (mask) {
      g.mask.col(col) = (upstream.array() * pass.term_outputs[k].array()).rowwise().sum().matrix();
      up = (upstream.array().colwise() * mask->col(col).array()).matrix();
    } else {
      up = upstream;
    }
    auto tape = term.net.backward(pass.caches[k], up);
    const auto& coords = term.index.coords();
    for (std::size_t r = 0; r < coords.size(); ++r)
      g.input.row(coords[r]) += tape.input_grad.row(static_cast<Eigen::Index>(r));
    g.terms.push_back(std::move(tape));
  }
  return g;
}

/// Decoded means (P x N) for inputs `x` (D x N).
inline Eigen::MatrixXd decode(const DecompositionModel& model, const Eigen::MatrixXd& x) {
  return decode_forward(model, x).output;
}

inline Eigen::MatrixXd decode(const DecompositionModel& model, const Eigen::MatrixXd& x,
                              const TermMasks& masks) {
  const auto m = mask_matrix(model, masks);
  return decode_forward(model, x, &m).output;
}

/// Model containing only term `idx` (same intercept and noise).
inline DecompositionModel single_term_model(const DecompositionModel& model, const TermIndex& idx) {
  DecompositionModel sub = model;
  sub.terms = {model.terms[model.index_of(idx)]};
  return sub;
}

}  // namespace nd::decomp
