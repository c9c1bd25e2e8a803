#pragma once

#include <cstddef>

namespace cxr::kernels {

// Every kernel ships in two variants: a serial reference and an OpenMP
// driver. Both call the same per-item worker, and each output element is
// produced by exactly one worker with a fixed-order inner reduction, so the
// two variants are bit-identical for any thread count. The unsuffixed entry
// points dispatch on the process-wide backend.
enum class Backend { Serial, OpenMp };

Backend backend();
void setBackend(Backend b);
bool openmpCompiled();
int maxThreads();

// ---------------------------------------------------------------------------
// 2-D convolution, NCHW layout. Weights are [outC, inC/groups, kH, kW].
// ---------------------------------------------------------------------------
struct Conv2dDims {
  int n = 0, inC = 0, inH = 0, inW = 0;
  int outC = 0, kH = 0, kW = 0;
  int stride = 1, pad = 0;
  int groups = 1;

  int outH() const { return (inH + 2 * pad - kH) / stride + 1; }
  int outW() const { return (inW + 2 * pad - kW) / stride + 1; }
};

void conv2dForwardSerial(const double* in, const double* w, const double* bias,
                         double* out, const Conv2dDims& d);
void conv2dForwardOmp(const double* in, const double* w, const double* bias,
                      double* out, const Conv2dDims& d);
void conv2dForward(const double* in, const double* w, const double* bias,
                   double* out, const Conv2dDims& d);

// gradIn must be zeroed by the caller; contributions accumulate.
void conv2dBackwardInputSerial(const double* gradOut, const double* w,
                               double* gradIn, const Conv2dDims& d);
void conv2dBackwardInputOmp(const double* gradOut, const double* w,
                            double* gradIn, const Conv2dDims& d);
void conv2dBackwardInput(const double* gradOut, const double* w, double* gradIn,
                         const Conv2dDims& d);

// Accumulates into gradW / gradBias (callers keep running sums per step).
// gradBias may be null.
void conv2dBackwardParamsSerial(const double* gradOut, const double* in,
                                double* gradW, double* gradBias,
                                const Conv2dDims& d);
void conv2dBackwardParamsOmp(const double* gradOut, const double* in,
                             double* gradW, double* gradBias,
                             const Conv2dDims& d);
void conv2dBackwardParams(const double* gradOut, const double* in, double* gradW,
                          double* gradBias, const Conv2dDims& d);

// ---------------------------------------------------------------------------
// General matrix multiply: C = A·B (optionally transposed operands).
// A is [m,k] (or [k,m] when transA), B is [k,n] (or [n,k] when transB),
// C is [m,n]. With accumulate, adds into C instead of overwriting.
// ---------------------------------------------------------------------------
void matmulSerial(const double* a, const double* b, double* c, int m, int n,
                  int k, bool transA, bool transB, bool accumulate);
void matmulOmp(const double* a, const double* b, double* c, int m, int n, int k,
               bool transA, bool transB, bool accumulate);
void matmul(const double* a, const double* b, double* c, int m, int n, int k,
            bool transA, bool transB, bool accumulate);

// ---------------------------------------------------------------------------
// Pooling, NCHW. No padding; window k, step `stride`.
// ---------------------------------------------------------------------------
struct Pool2dDims {
  int n = 0, c = 0, inH = 0, inW = 0;
  int k = 2, stride = 2;

  int outH() const { return (inH - k) / stride + 1; }
  int outW() const { return (inW - k) / stride + 1; }
};

// argmax holds the flat in-plane index of each max (first hit wins ties).
void maxPool2dForwardSerial(const double* in, double* out, int* argmax,
                            const Pool2dDims& d);
void maxPool2dForwardOmp(const double* in, double* out, int* argmax,
                         const Pool2dDims& d);
void maxPool2dForward(const double* in, double* out, int* argmax,
                      const Pool2dDims& d);

// gradIn zeroed by the caller.
void maxPool2dBackwardSerial(const double* gradOut, const int* argmax,
                             double* gradIn, const Pool2dDims& d);
void maxPool2dBackwardOmp(const double* gradOut, const int* argmax,
                          double* gradIn, const Pool2dDims& d);
void maxPool2dBackward(const double* gradOut, const int* argmax, double* gradIn,
                       const Pool2dDims& d);

void avgPool2dForwardSerial(const double* in, double* out, const Pool2dDims& d);
void avgPool2dForwardOmp(const double* in, double* out, const Pool2dDims& d);
void avgPool2dForward(const double* in, double* out, const Pool2dDims& d);

void avgPool2dBackwardSerial(const double* gradOut, double* gradIn,
                             const Pool2dDims& d);
void avgPool2dBackwardOmp(const double* gradOut, double* gradIn,
                          const Pool2dDims& d);
void avgPool2dBackward(const double* gradOut, double* gradIn,
                       const Pool2dDims& d);

// ---------------------------------------------------------------------------
// Single-plane image resampling.
// ---------------------------------------------------------------------------

// Bilinear resize with half-pixel centers; identity sizes reproduce the input
// exactly.
void resizeBilinearSerial(const double* in, int inH, int inW, double* out,
                          int outH, int outW);
void resizeBilinearOmp(const double* in, int inH, int inW, double* out,
                       int outH, int outW);
void resizeBilinear(const double* in, int inH, int inW, double* out, int outH,
                    int outW);

// Inverse-mapped affine warp. `inv` maps destination (x=col, y=row) pixel
// centers to source coordinates: srcX = a00·x + a01·y + tx, srcY = a10·x +
// a11·y + ty. Samples bilinear (or nearest), `fill` outside the source.
struct Affine2d {
  double a00 = 1, a01 = 0, a10 = 0, a11 = 1, tx = 0, ty = 0;
};

void warpAffineSerial(const double* in, int h, int w, double* out,
                      const Affine2d& inv, bool nearest, double fill);
void warpAffineOmp(const double* in, int h, int w, double* out,
                   const Affine2d& inv, bool nearest, double fill);
void warpAffine(const double* in, int h, int w, double* out, const Affine2d& inv,
                bool nearest, double fill);

// ---------------------------------------------------------------------------
// Elementwise.
// ---------------------------------------------------------------------------
void reluForwardSerial(const double* in, double* out, std::size_t size);
void reluForwardOmp(const double* in, double* out, std::size_t size);
void reluForward(const double* in, double* out, std::size_t size);

// gradIn = gradOut where in > 0 else 0 (accumulating).
void reluBackwardSerial(const double* gradOut, const double* in, double* gradIn,
                        std::size_t size);
void reluBackwardOmp(const double* gradOut, const double* in, double* gradIn,
                     std::size_t size);
void reluBackward(const double* gradOut, const double* in, double* gradIn,
                  std::size_t size);

// y += alpha * x
void axpySerial(double alpha, const double* x, double* y, std::size_t size);
void axpyOmp(double alpha, const double* x, double* y, std::size_t size);
void axpy(double alpha, const double* x, double* y, std::size_t size);

}  // namespace cxr::kernels
