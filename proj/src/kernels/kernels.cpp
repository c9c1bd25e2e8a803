#include "cxrlab/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cxr::kernels {

namespace {

Backend g_backend = openmpCompiled() ? Backend::OpenMp : Backend::Serial;

// ceil(a / b) for b > 0, correct for negative a.
inline int ceilDiv(int a, int b) {
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Valid output range [lo, hi] so that o*stride - pad + kOff stays inside
// [0, inDim).
inline void validRange(int outDim, int inDim, int stride, int pad, int kOff,
                       int* lo, int* hi) {
  *lo = std::max(0, ceilDiv(pad - kOff, stride));
  *hi = std::min(outDim - 1, (inDim - 1 + pad - kOff) / stride);
}

// ---------------------------------------------------------------------------
// Per-item workers. Serial and OpenMP drivers share these so both backends
// execute identical floating-point sequences per output element.
// ---------------------------------------------------------------------------

void convFwdItem(const double* in, const double* w, const double* bias,
                 double* out, const Conv2dDims& d, int n, int oc) {
  const int outH = d.outH(), outW = d.outW();
  const int icPerG = d.inC / d.groups, ocPerG = d.outC / d.groups;
  const int g = oc / ocPerG;
  double* outPlane =
      out + (static_cast<std::size_t>(n) * d.outC + oc) * outH * outW;
  const double b = bias ? bias[oc] : 0.0;
  for (int i = 0; i < outH * outW; ++i) outPlane[i] = b;

  for (int icg = 0; icg < icPerG; ++icg) {
    const int ic = g * icPerG + icg;
    const double* inPlane =
        in + (static_cast<std::size_t>(n) * d.inC + ic) * d.inH * d.inW;
    const double* wBase =
        w + (static_cast<std::size_t>(oc) * icPerG + icg) * d.kH * d.kW;
    for (int kh = 0; kh < d.kH; ++kh) {
      int ohLo, ohHi;
      validRange(outH, d.inH, d.stride, d.pad, kh, &ohLo, &ohHi);
      for (int kw = 0; kw < d.kW; ++kw) {
        const double wv = wBase[kh * d.kW + kw];
        int owLo, owHi;
        validRange(outW, d.inW, d.stride, d.pad, kw, &owLo, &owHi);
        for (int oh = ohLo; oh <= ohHi; ++oh) {
          const int ih = oh * d.stride - d.pad + kh;
          const double* inRow = inPlane + ih * d.inW + (kw - d.pad);
          double* outRow = outPlane + oh * outW;
          if (d.stride == 1) {
            for (int ow = owLo; ow <= owHi; ++ow)
              outRow[ow] += wv * inRow[ow];
          } else {
            for (int ow = owLo; ow <= owHi; ++ow)
              outRow[ow] += wv * inRow[ow * d.stride];
          }
        }
      }
    }
  }
}

void convBwdInputItem(const double* gradOut, const double* w, double* gradIn,
                      const Conv2dDims& d, int n, int ic) {
  const int outH = d.outH(), outW = d.outW();
  const int icPerG = d.inC / d.groups, ocPerG = d.outC / d.groups;
  const int g = ic / icPerG;
  const int icg = ic - g * icPerG;
  double* giPlane =
      gradIn + (static_cast<std::size_t>(n) * d.inC + ic) * d.inH * d.inW;

  for (int ocg = 0; ocg < ocPerG; ++ocg) {
    const int oc = g * ocPerG + ocg;
    const double* goPlane =
        gradOut + (static_cast<std::size_t>(n) * d.outC + oc) * outH * outW;
    const double* wBase =
        w + (static_cast<std::size_t>(oc) * icPerG + icg) * d.kH * d.kW;
    for (int kh = 0; kh < d.kH; ++kh) {
      int ohLo, ohHi;
      validRange(outH, d.inH, d.stride, d.pad, kh, &ohLo, &ohHi);
      for (int kw = 0; kw < d.kW; ++kw) {
        const double wv = wBase[kh * d.kW + kw];
        int owLo, owHi;
        validRange(outW, d.inW, d.stride, d.pad, kw, &owLo, &owHi);
        for (int oh = ohLo; oh <= ohHi; ++oh) {
          const int ih = oh * d.stride - d.pad + kh;
          double* giRow = giPlane + ih * d.inW + (kw - d.pad);
          const double* goRow = goPlane + oh * outW;
          if (d.stride == 1) {
            for (int ow = owLo; ow <= owHi; ++ow)
              giRow[ow] += wv * goRow[ow];
          } else {
            for (int ow = owLo; ow <= owHi; ++ow)
              giRow[ow * d.stride] += wv * goRow[ow];
          }
        }
      }
    }
  }
}

void convBwdParamsItem(const double* gradOut, const double* in, double* gradW,
                       double* gradBias, const Conv2dDims& d, int oc) {
  const int outH = d.outH(), outW = d.outW();
  const int icPerG = d.inC / d.groups, ocPerG = d.outC / d.groups;
  const int g = oc / ocPerG;

  for (int icg = 0; icg < icPerG; ++icg) {
    const int ic = g * icPerG + icg;
    double* wBase =
        gradW + (static_cast<std::size_t>(oc) * icPerG + icg) * d.kH * d.kW;
    for (int kh = 0; kh < d.kH; ++kh) {
      int ohLo, ohHi;
      validRange(outH, d.inH, d.stride, d.pad, kh, &ohLo, &ohHi);
      for (int kw = 0; kw < d.kW; ++kw) {
        int owLo, owHi;
        validRange(outW, d.inW, d.stride, d.pad, kw, &owLo, &owHi);
        double s = 0.0;
        for (int n = 0; n < d.n; ++n) {
          const double* inPlane =
              in + (static_cast<std::size_t>(n) * d.inC + ic) * d.inH * d.inW;
          const double* goPlane = gradOut + (static_cast<std::size_t>(n) * d.outC + oc) * outH * outW;
          for (int oh = ohLo; oh <= ohHi; ++oh) {
            const int ih = oh * d.stride - d.pad + kh;
            const double* inRow = inPlane + ih * d.inW + (kw - d.pad);
            const double* goRow = goPlane + oh * outW;
            if (d.stride == 1) {
              for (int ow = owLo; ow <= owHi; ++ow)
                s += goRow[ow] * inRow[ow];
            } else {
              for (int ow = owLo; ow <= owHi; ++ow)
                s += goRow[ow] * inRow[ow * d.stride];
            }
          }
        }
        wBase[kh * d.kW + kw] += s;
      }
    }
  }

  if (gradBias) {
    double s = 0.0;
    for (int n = 0; n < d.n; ++n) {
      const double* goPlane =
          gradOut + (static_cast<std::size_t>(n) * d.outC + oc) * outH * outW;
      for (int i = 0; i < outH * outW; ++i) s += goPlane[i];
    }
    gradBias[oc] += s;
  }
}

void matmulRow(const double* a, const double* b, double* c, int m, int n, int k,
               bool transA, bool transB, bool accumulate, int i) {
  (void)m;
  double* cRow = c + static_cast<std::size_t>(i) * n;
  if (!transB) {
    if (!accumulate)
      for (int j = 0; j < n; ++j) cRow[j] = 0.0;
    for (int p = 0; p < k; ++p) {
      const double av = transA ? a[static_cast<std::size_t>(p) * m + i]
                               : a[static_cast<std::size_t>(i) * k + p];
      const double* bRow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cRow[j] += av * bRow[j];
    }
  } else {
    for (int j = 0; j < n; ++j) {
      const double* bRow = b + static_cast<std::size_t>(j) * k;
      double s = accumulate ? cRow[j] : 0.0;
      if (transA) {
        for (int p = 0; p < k; ++p)
          s += a[static_cast<std::size_t>(p) * m + i] * bRow[p];
      } else {
        const double* aRow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) s += aRow[p] * bRow[p];
      }
      cRow[j] = s;
    }
  }
}

void maxPoolFwdItem(const double* in, double* out, int* argmax,
                    const Pool2dDims& d, int plane) {
  const int outH = d.outH(), outW = d.outW();
  const double* inPlane =
      in + static_cast<std::size_t>(plane) * d.inH * d.inW;
  double* outPlane = out + static_cast<std::size_t>(plane) * outH * outW;
  int* amPlane = argmax + static_cast<std::size_t>(plane) * outH * outW;
  for (int oh = 0; oh < outH; ++oh) {
    for (int ow = 0; ow < outW; ++ow) {
      const int ih0 = oh * d.stride, iw0 = ow * d.stride;
      double best = inPlane[ih0 * d.inW + iw0];
      int bestIdx = ih0 * d.inW + iw0;
      for (int kh = 0; kh < d.k; ++kh) {
        for (int kw = 0; kw < d.k; ++kw) {
          const int idx = (ih0 + kh) * d.inW + (iw0 + kw);
          if (inPlane[idx] > best) {
            best = inPlane[idx];
            bestIdx = idx;
          }
        }
      }
      outPlane[oh * outW + ow] = best;
      amPlane[oh * outW + ow] = bestIdx;
    }
  }
}

void maxPoolBwdItem(const double* gradOut, const int* argmax, double* gradIn,
                    const Pool2dDims& d, int plane) {
  const int outH = d.outH(), outW = d.outW();
  const double* goPlane =
      gradOut + static_cast<std::size_t>(plane) * outH * outW;
  const int* amPlane = argmax + static_cast<std::size_t>(plane) * outH * outW;
  double* giPlane = gradIn + static_cast<std::size_t>(plane) * d.inH * d.inW;
  for (int i = 0; i < outH * outW; ++i) giPlane[amPlane[i]] += goPlane[i];
}

void avgPoolFwdItem(const double* in, double* out, const Pool2dDims& d,
                    int plane) {
  const int outH = d.outH(), outW = d.outW();
  const double inv = 1.0 / (d.k * d.k);
  const double* inPlane =
      in + static_cast<std::size_t>(plane) * d.inH * d.inW;
  double* outPlane = out + static_cast<std::size_t>(plane) * outH * outW;
  for (int oh = 0; oh < outH; ++oh) {
    for (int ow = 0; ow < outW; ++ow) {
      double s = 0.0;
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw)
          s += inPlane[(oh * d.stride + kh) * d.inW + (ow * d.stride + kw)];
      outPlane[oh * outW + ow] = s * inv;
    }
  }
}

void avgPoolBwdItem(const double* gradOut, double* gradIn, const Pool2dDims& d,
                    int plane) {
  const int outH = d.outH(), outW = d.outW();
  const double inv = 1.0 / (d.k * d.k);
  const double* goPlane =
      gradOut + static_cast<std::size_t>(plane) * outH * outW;
  double* giPlane = gradIn + static_cast<std::size_t>(plane) * d.inH * d.inW;
  for (int oh = 0; oh < outH; ++oh) {
    for (int ow = 0; ow < outW; ++ow) {
      const double g = goPlane[oh * outW + ow] * inv;
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw)
          giPlane[(oh * d.stride + kh) * d.inW + (ow * d.stride + kw)] += g;
    }
  }
}

void resizeRow(const double* in, int inH, int inW, double* out, int outH,
               int outW, int oy) {
  const double scaleY = static_cast<double>(inH) / outH;
  const double scaleX = static_cast<double>(inW) / outW;
  double srcY = (oy + 0.5) * scaleY - 0.5;
  srcY = std::clamp(srcY, 0.0, static_cast<double>(inH - 1));
  const int y0 = static_cast<int>(srcY);
  const int y1 = std::min(y0 + 1, inH - 1);
  const double fy = srcY - y0;
  double* outRow = out + static_cast<std::size_t>(oy) * outW;
  for (int ox = 0; ox < outW; ++ox) {
    double srcX = (ox + 0.5) * scaleX - 0.5;
    srcX = std::clamp(srcX, 0.0, static_cast<double>(inW - 1));
    const int x0 = static_cast<int>(srcX);
    const int x1 = std::min(x0 + 1, inW - 1);
    const double fx = srcX - x0;
    const double top = in[y0 * inW + x0] * (1 - fx) + in[y0 * inW + x1] * fx;
    const double bot = in[y1 * inW + x0] * (1 - fx) + in[y1 * inW + x1] * fx;
    outRow[ox] = top * (1 - fy) + bot * fy;
  }
}

void warpRow(const double* in, int h, int w, double* out, const Affine2d& m,
             bool nearest, double fill, int y) {
  double* outRow = out + static_cast<std::size_t>(y) * w;
  for (int x = 0; x < w; ++x) {
    const double sx = m.a00 * x + m.a01 * y + m.tx;
    const double sy = m.a10 * x + m.a11 * y + m.ty;
    if (nearest) {
      const int rx = static_cast<int>(std::lround(sx));
      const int ry = static_cast<int>(std::lround(sy));
      outRow[x] = (rx >= 0 && rx < w && ry >= 0 && ry < h)
                      ? in[ry * w + rx]
                      : fill;
    } else {
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      auto sample = [&](int yy, int xx) {
        return (xx >= 0 && xx < w && yy >= 0 && yy < h) ? in[yy * w + xx]
                                                        : fill;
      };
      const double top = sample(y0, x0) * (1 - fx) + sample(y0, x0 + 1) * fx;
      const double bot =
          sample(y0 + 1, x0) * (1 - fx) + sample(y0 + 1, x0 + 1) * fx;
      outRow[x] = top * (1 - fy) + bot * fy;
    }
  }
}

}  // namespace

Backend backend() { return g_backend; }
void setBackend(Backend b) { g_backend = b; }

bool openmpCompiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int maxThreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

void conv2dForwardSerial(const double* in, const double* w, const double* bias,
                         double* out, const Conv2dDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int oc = 0; oc < d.outC; ++oc) convFwdItem(in, w, bias, out, d, n, oc);
}

void conv2dForwardOmp(const double* in, const double* w, const double* bias,
                      double* out, const Conv2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int oc = 0; oc < d.outC; ++oc) convFwdItem(in, w, bias, out, d, n, oc);
#else
  conv2dForwardSerial(in, w, bias, out, d);
#endif
}

void conv2dForward(const double* in, const double* w, const double* bias,
                   double* out, const Conv2dDims& d) {
  if (g_backend == Backend::OpenMp)
    conv2dForwardOmp(in, w, bias, out, d);
  else
    conv2dForwardSerial(in, w, bias, out, d);
}

void conv2dBackwardInputSerial(const double* gradOut, const double* w,
                               double* gradIn, const Conv2dDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int ic = 0; ic < d.inC; ++ic)
      convBwdInputItem(gradOut, w, gradIn, d, n, ic);
}

void conv2dBackwardInputOmp(const double* gradOut, const double* w,
                            double* gradIn, const Conv2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int ic = 0; ic < d.inC; ++ic)
      convBwdInputItem(gradOut, w, gradIn, d, n, ic);
#else
  conv2dBackwardInputSerial(gradOut, w, gradIn, d);
#endif
}

void conv2dBackwardInput(const double* gradOut, const double* w, double* gradIn,
                         const Conv2dDims& d) {
  if (g_backend == Backend::OpenMp)
    conv2dBackwardInputOmp(gradOut, w, gradIn, d);
  else
    conv2dBackwardInputSerial(gradOut, w, gradIn, d);
}

void conv2dBackwardParamsSerial(const double* gradOut, const double* in,
                                double* gradW, double* gradBias,
                                const Conv2dDims& d) {
  for (int oc = 0; oc < d.outC; ++oc)
    convBwdParamsItem(gradOut, in, gradW, gradBias, d, oc);
}

void conv2dBackwardParamsOmp(const double* gradOut, const double* in,
                             double* gradW, double* gradBias,
                             const Conv2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int oc = 0; oc < d.outC; ++oc)
    convBwdParamsItem(gradOut, in, gradW, gradBias, d, oc);
#else
  conv2dBackwardParamsSerial(gradOut, in, gradW, gradBias, d);
#endif
}

void conv2dBackwardParams(const double* gradOut, const double* in,
                          double* gradW, double* gradBias,
                          const Conv2dDims& d) {
  if (g_backend == Backend::OpenMp)
    conv2dBackwardParamsOmp(gradOut, in, gradW, gradBias, d);
  else
    conv2dBackwardParamsSerial(gradOut, in, gradW, gradBias, d);
}

void matmulSerial(const double* a, const double* b, double* c, int m, int n,
                  int k, bool transA, bool transB, bool accumulate) {
  for (int i = 0; i < m; ++i)
    matmulRow(a, b, c, m, n, k, transA, transB, accumulate, i);
}

void matmulOmp(const double* a, const double* b, double* c, int m, int n, int k,
               bool transA, bool transB, bool accumulate) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    matmulRow(a, b, c, m, n, k, transA, transB, accumulate, i);
#else
  matmulSerial(a, b, c, m, n, k, transA, transB, accumulate);
#endif
}

void matmul(const double* a, const double* b, double* c, int m, int n, int k,
            bool transA, bool transB, bool accumulate) {
  if (g_backend == Backend::OpenMp)
    matmulOmp(a, b, c, m, n, k, transA, transB, accumulate);
  else
    matmulSerial(a, b, c, m, n, k, transA, transB, accumulate);
}

void maxPool2dForwardSerial(const double* in, double* out, int* argmax,
                            const Pool2dDims& d) {
  for (int p = 0; p < d.n * d.c; ++p) maxPoolFwdItem(in, out, argmax, d, p);
}

void maxPool2dForwardOmp(const double* in, double* out, int* argmax,
                         const Pool2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.n * d.c; ++p) maxPoolFwdItem(in, out, argmax, d, p);
#else
  maxPool2dForwardSerial(in, out, argmax, d);
#endif
}

void maxPool2dForward(const double* in, double* out, int* argmax,
                      const Pool2dDims& d) {
  if (g_backend == Backend::OpenMp)
    maxPool2dForwardOmp(in, out, argmax, d);
  else
    maxPool2dForwardSerial(in, out, argmax, d);
}

void maxPool2dBackwardSerial(const double* gradOut, const int* argmax,
                             double* gradIn, const Pool2dDims& d) {
  for (int p = 0; p < d.n * d.c; ++p)
    maxPoolBwdItem(gradOut, argmax, gradIn, d, p);
}

void maxPool2dBackwardOmp(const double* gradOut, const int* argmax,
                          double* gradIn, const Pool2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.n * d.c; ++p)
    maxPoolBwdItem(gradOut, argmax, gradIn, d, p);
#else
  maxPool2dBackwardSerial(gradOut, argmax, gradIn, d);
#endif
}

void maxPool2dBackward(const double* gradOut, const int* argmax, double* gradIn,
                       const Pool2dDims& d) {
  if (g_backend == Backend::OpenMp)
    maxPool2dBackwardOmp(gradOut, argmax, gradIn, d);
  else
    maxPool2dBackwardSerial(gradOut, argmax, gradIn, d);
}

void avgPool2dForwardSerial(const double* in, double* out, const Pool2dDims& d) {
  for (int p = 0; p < d.n * d.c; ++p) avgPoolFwdItem(in, out, d, p);
}

void avgPool2dForwardOmp(const double* in, double* out, const Pool2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.n * d.c; ++p) avgPoolFwdItem(in, out, d, p);
#else
  avgPool2dForwardSerial(in, out, d);
#endif
}

void avgPool2dForward(const double* in, double* out, const Pool2dDims& d) {
  if (g_backend == Backend::OpenMp)
    avgPool2dForwardOmp(in, out, d);
  else
    avgPool2dForwardSerial(in, out, d);
}

void avgPool2dBackwardSerial(const double* gradOut, double* gradIn,
                             const Pool2dDims& d) {
  for (int p = 0; p < d.n * d.c; ++p) avgPoolBwdItem(gradOut, gradIn, d, p);
}

void avgPool2dBackwardOmp(const double* gradOut, double* gradIn,
                          const Pool2dDims& d) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int p = 0; p < d.n * d.c; ++p) avgPoolBwdItem(gradOut, gradIn, d, p);
#else
  avgPool2dBackwardSerial(gradOut, gradIn, d);
#endif
}

void avgPool2dBackward(const double* gradOut, double* gradIn,
                       const Pool2dDims& d) {
  if (g_backend == Backend::OpenMp)
    avgPool2dBackwardOmp(gradOut, gradIn, d);
  else
    avgPool2dBackwardSerial(gradOut, gradIn, d);
}

void resizeBilinearSerial(const double* in, int inH, int inW, double* out,
                          int outH, int outW) {
  for (int oy = 0; oy < outH; ++oy) resizeRow(in, inH, inW, out, outH, outW, oy);
}

void resizeBilinearOmp(const double* in, int inH, int inW, double* out,
                       int outH, int outW) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < outH; ++oy) resizeRow(in, inH, inW, out, outH, outW, oy);
#else
  resizeBilinearSerial(in, inH, inW, out, outH, outW);
#endif
}

void resizeBilinear(const double* in, int inH, int inW, double* out, int outH,
                    int outW) {
  if (g_backend == Backend::OpenMp)
    resizeBilinearOmp(in, inH, inW, out, outH, outW);
  else
    resizeBilinearSerial(in, inH, inW, out, outH, outW);
}

void warpAffineSerial(const double* in, int h, int w, double* out,
                      const Affine2d& inv, bool nearest, double fill) {
  for (int y = 0; y < h; ++y) warpRow(in, h, w, out, inv, nearest, fill, y);
}

void warpAffineOmp(const double* in, int h, int w, double* out,
                   const Affine2d& inv, bool nearest, double fill) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) warpRow(in, h, w, out, inv, nearest, fill, y);
#else
  warpAffineSerial(in, h, w, out, inv, nearest, fill);
#endif
}

void warpAffine(const double* in, int h, int w, double* out,
                const Affine2d& inv, bool nearest, double fill) {
  if (g_backend == Backend::OpenMp)
    warpAffineOmp(in, h, w, out, inv, nearest, fill);
  else
    warpAffineSerial(in, h, w, out, inv, nearest, fill);
}

void reluForwardSerial(const double* in, double* out, std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void reluForwardOmp(const double* in, double* out, std::size_t size) {
#ifdef _OPENMP
  const std::int64_t n = static_cast<std::int64_t>(size);
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
#else
  reluForwardSerial(in, out, size);
#endif
}

void reluForward(const double* in, double* out, std::size_t size) {
  if (g_backend == Backend::OpenMp)
    reluForwardOmp(in, out, size);
  else
    reluForwardSerial(in, out, size);
}

void reluBackwardSerial(const double* gradOut, const double* in, double* gradIn,
                        std::size_t size) {
  for (std::size_t i = 0; i < size; ++i)
    if (in[i] > 0.0) gradIn[i] += gradOut[i];
}

void reluBackwardOmp(const double* gradOut, const double* in, double* gradIn,
                     std::size_t size) {
#ifdef _OPENMP
  const std::int64_t n = static_cast<std::int64_t>(size);
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::int64_t i = 0; i < n; ++i)
    if (in[i] > 0.0) gradIn[i] += gradOut[i];
#else
  reluBackwardSerial(gradOut, in, gradIn, size);
#endif
}

void reluBackward(const double* gradOut, const double* in, double* gradIn,
                  std::size_t size) {
  if (g_backend == Backend::OpenMp)
    reluBackwardOmp(gradOut, in, gradIn, size);
  else
    reluBackwardSerial(gradOut, in, gradIn, size);
}

void axpySerial(double alpha, const double* x, double* y, std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) y[i] += alpha * x[i];
}

void axpyOmp(double alpha, const double* x, double* y, std::size_t size) {
#ifdef _OPENMP
  const std::int64_t n = static_cast<std::int64_t>(size);
#pragma omp parallel for schedule(static) if (n > 16384)
  for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
#else
  axpySerial(alpha, x, y, size);
#endif
}

void axpy(double alpha, const double* x, double* y, std::size_t size) {
  if (g_backend == Backend::OpenMp)
    axpyOmp(alpha, x, y, size);
  else
    axpySerial(alpha, x, y, size);
}

}  // namespace cxr::kernels
