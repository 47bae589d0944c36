/**
 * Polynomial activation coefficients, lowest power first.
 *
 * Identical to the coefficient file shipped with the inference toolchain
 * (src/heplan/data/activations.json) so training and mock execution use
 * the same nonlinearity.
 */

import * as tf from "@tensorflow/tfjs";

export const POLY_COEFFS: Record<number, number[]> = {
  2: [0.75018721882, 0.5, 0.058579116202],
  4: [0.468866748157, 0.5, 0.102513485373, 0.0, -0.000800486861],
  8: [
    0.269231573068, 0.5, 0.185004998271, 0.0, -0.006260073833, 0.0,
    0.000117317941, 0.0, -7.94568e-7,
  ],
};

/** Differentiable Horner evaluation of the degree-d activation. */
export function polyAct(x: tf.Tensor, degree: number): tf.Tensor {
  const coefs = POLY_COEFFS[degree];
  if (!coefs) {
    throw new Error(`no activation coefficients for degree ${degree}`);
  }
  return tf.tidy(() => {
    let acc: tf.Tensor = tf.fill(x.shape, coefs[coefs.length - 1]);
    for (let i = coefs.length - 2; i >= 0; i--) {
      acc = acc.mul(x).add(coefs[i]);
    }
    return acc;
  });
}

/** Plain-number Horner, for float64 reference computations in tests. */
export function polyActScalar(x: number, degree: number): number {
  const coefs = POLY_COEFFS[degree];
  let acc = coefs[coefs.length - 1];
  for (let i = coefs.length - 2; i >= 0; i--) {
    acc = acc * x + coefs[i];
  }
  return acc;
}
