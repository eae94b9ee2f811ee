#pragma once

#include "grid.hpp"
#include "kernel.hpp"

namespace gfp {

// White-noise convolution sampler:
//   f(x) = h^{d/2} sum_v q_r(x - v) xi_v,   v over the padded node lattice.
// Computed as one FFT circular correlation per kernel; interior nodes are
// exact because pad >= kernel support.  With coupled=true the same noise is
// convolved with the untruncated kernel into FieldSample::coupled.
FieldSample sample_convolution(const TruncatedKernel& k, const GridGeometry& g,
                               bool coupled, uint64_t master_seed,
                               uint64_t replicate, uint64_t stream = 0);

// physical padding the convolution sampler needs for this kernel
double required_pad(const TruncatedKernel& k, bool coupled);

// Entire-series sampler (d=2):
//   f(x) = e^{-|x|^2/2} sum_{i1+i2<=N} a_i x1^{i1} x2^{i2} / sqrt(i1! i2!)
// N is auto-chosen (or validated) against the tail bound
//   e^{rho^2} rho^{2N} / N! < 1e-8,  rho = max |x| over the grid.
int series_required_degree(double rho);
FieldSample sample_series2d(const GridGeometry& g, int degree_cap,
                            uint64_t master_seed, uint64_t replicate,
                            uint64_t stream = 0);

// Random plane waves: f(x) = sqrt(2/M) sum_j cos(<k_j, x> + phi_j),
// k_j uniform on the unit sphere, phi_j uniform on [0, 2pi).
FieldSample sample_plane_waves(const GridGeometry& g, int num_waves,
                               uint64_t master_seed, uint64_t replicate,
                               uint64_t stream = 0);

}  // namespace gfp
