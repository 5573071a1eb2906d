#include "mvprof/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mvprof {
namespace kernels {

// Work below this many output elements is not worth a parallel region.
static constexpr long long kParCutoff = 16 * 1024;

void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate) {
    if (!accumulate)
        std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    const long long work = 1ll * m * n * k;
#pragma omp parallel for schedule(static) if (work >= kParCutoff)
    for (int i = 0; i < m; ++i) {
        double* ci = c + std::size_t(i) * n;
        const double* ai = a + std::size_t(i) * k;
        for (int t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b + std::size_t(t) * n;
            for (int j = 0; j < n; ++j)
                ci[j] += av * bt[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate) {
    if (!accumulate)
        std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    const long long work = 1ll * m * n * k;
#pragma omp parallel for schedule(static) if (work >= kParCutoff)
    for (int i = 0; i < m; ++i) {
        double* ci = c + std::size_t(i) * n;
        const double* ai = a + std::size_t(i) * k;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + std::size_t(j) * k;
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += ai[t] * bj[t];
            ci[j] += acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k,
               int n, bool accumulate) {
    if (!accumulate)
        std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
    const long long work = 1ll * m * n * k;
#pragma omp parallel for schedule(static) if (work >= kParCutoff)
    for (int i = 0; i < m; ++i) {
        double* ci = c + std::size_t(i) * n;
        for (int t = 0; t < k; ++t) {
            const double av = a[std::size_t(t) * m + i];
            const double* bt = b + std::size_t(t) * n;
            for (int j = 0; j < n; ++j)
                ci[j] += av * bt[j];
        }
    }
}

void softmax_rows(const double* x, double* y, int rows, int n) {
    const long long work = 1ll * rows * n;
#pragma omp parallel for schedule(static) if (work >= kParCutoff)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + std::size_t(r) * n;
        double* yr = y + std::size_t(r) * n;
        double mx = xr[0];
        for (int j = 1; j < n; ++j)
            mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j)
            yr[j] *= inv;
    }
}

void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, double* xhat, double* inv_std,
                    int rows, int d) {
    const long long work = 1ll * rows * d;
#pragma omp parallel for schedule(static) if (work >= kParCutoff)
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + std::size_t(r) * d;
        double* yr = y + std::size_t(r) * d;
        double* hr = xhat + std::size_t(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j)
            mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xr[j] - mean;
            var += c * c;
        }
        var /= d;
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[r] = s;
        for (int j = 0; j < d; ++j) {
            hr[j] = (xr[j] - mean) * s;
            yr[j] = gain[j] * hr[j] + bias[j];
        }
    }
}

static inline double sigmoid1(double v) {
    if (v >= 0.0)
        return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

void map_sigmoid(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= std::size_t(kParCutoff))
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i)
        y[i] = sigmoid1(x[i]);
}

void map_relu(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= std::size_t(kParCutoff))
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void map_gelu(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= std::size_t(kParCutoff))
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
        const double v = x[i];
        const double u = kGeluC0 * (v + kGeluC1 * v * v * v);
        y[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
}

void map_softplus(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static) if (n >= std::size_t(kParCutoff))
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(n); ++i) {
        const double v = x[i];
        y[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
    }
}

} // namespace kernels

namespace ref {

void matmul_nn(const double* a, const double* b, double* c, int m, int k,
               int n) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += a[std::size_t(i) * k + t] * b[std::size_t(t) * n + j];
            c[std::size_t(i) * n + j] = acc;
        }
}

void softmax_rows(const double* x, double* y, int rows, int n) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + std::size_t(r) * n;
        double* yr = y + std::size_t(r) * n;
        double mx = xr[0];
        for (int j = 1; j < n; ++j)
            if (xr[j] > mx)
                mx = xr[j];
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < n; ++j)
            yr[j] /= sum;
    }
}

void layernorm_rows(const double* x, const double* gain, const double* bias,
                    double eps, double* y, int rows, int d) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + std::size_t(r) * d;
        double* yr = y + std::size_t(r) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j)
            mean += xr[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j)
            var += (xr[j] - mean) * (xr[j] - mean);
        var /= d;
        const double s = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < d; ++j)
            yr[j] = gain[j] * (xr[j] - mean) * s + bias[j];
    }
}

void map_gelu(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double u = kGeluC0 * (v + kGeluC1 * v * v * v);
        y[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
}

void map_sigmoid(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        if (v >= 0.0)
            y[i] = 1.0 / (1.0 + std::exp(-v));
        else {
            const double e = std::exp(v);
            y[i] = e / (1.0 + e);
        }
    }
}

} // namespace ref
} // namespace mvprof
