/* C += A @ B for row-major A[M,K], B[K,N], C[M,N].
 *
 * Every C[i,j] is accumulated over k in ascending order with a separate
 * multiply and add, whatever M is and wherever row i sits, so one row's
 * result never depends on the rest of the batch. Build with
 * -ffp-contract=off so the compiler keeps multiply and add unfused; the
 * numpy fallback performs the identical sequence of IEEE operations. */
#ifndef DILCONV_GEMM_KERNEL_H
#define DILCONV_GEMM_KERNEL_H

#include <stddef.h>

#define DC_KB 128
#define DC_NB 256
#define DC_MR 4
#define DC_NR 8

typedef double dc_v4 __attribute__((vector_size(32), aligned(8)));

static inline void dc_tile(const double *A, const double *B, double *C,
                           ptrdiff_t K, ptrdiff_t N, ptrdiff_t k0, ptrdiff_t k1)
{
    dc_v4 c00 = *(const dc_v4 *)(C), c01 = *(const dc_v4 *)(C + 4);
    dc_v4 c10 = *(const dc_v4 *)(C + N), c11 = *(const dc_v4 *)(C + N + 4);
    dc_v4 c20 = *(const dc_v4 *)(C + 2 * N), c21 = *(const dc_v4 *)(C + 2 * N + 4);
    dc_v4 c30 = *(const dc_v4 *)(C + 3 * N), c31 = *(const dc_v4 *)(C + 3 * N + 4);
    for (ptrdiff_t k = k0; k < k1; k++) {
        const dc_v4 b0 = *(const dc_v4 *)(B + k * N);
        const dc_v4 b1 = *(const dc_v4 *)(B + k * N + 4);
        const double a0 = A[k], a1 = A[K + k], a2 = A[2 * K + k], a3 = A[3 * K + k];
        c00 += a0 * b0; c01 += a0 * b1;
        c10 += a1 * b0; c11 += a1 * b1;
        c20 += a2 * b0; c21 += a2 * b1;
        c30 += a3 * b0; c31 += a3 * b1;
    }
    *(dc_v4 *)(C) = c00; *(dc_v4 *)(C + 4) = c01;
    *(dc_v4 *)(C + N) = c10; *(dc_v4 *)(C + N + 4) = c11;
    *(dc_v4 *)(C + 2 * N) = c20; *(dc_v4 *)(C + 2 * N + 4) = c21;
    *(dc_v4 *)(C + 3 * N) = c30; *(dc_v4 *)(C + 3 * N + 4) = c31;
}

static inline void dc_edge(const double *A, const double *B, double *C, ptrdiff_t K, ptrdiff_t N,
                           ptrdiff_t rows, ptrdiff_t cols, ptrdiff_t k0, ptrdiff_t k1)
{
    for (ptrdiff_t r = 0; r < rows; r++)
        for (ptrdiff_t j = 0; j < cols; j++) {
            double c = C[r * N + j];
            for (ptrdiff_t k = k0; k < k1; k++)
                c += A[r * K + k] * B[k * N + j];
            C[r * N + j] = c;
        }
}

static void dc_gemm(const double *A, const double *B, double *C,
                    ptrdiff_t M, ptrdiff_t K, ptrdiff_t N)
{
    for (ptrdiff_t k0 = 0; k0 < K; k0 += DC_KB) {
        ptrdiff_t k1 = k0 + DC_KB < K ? k0 + DC_KB : K;
        for (ptrdiff_t j0 = 0; j0 < N; j0 += DC_NB) {
            ptrdiff_t j1 = j0 + DC_NB < N ? j0 + DC_NB : N;
            ptrdiff_t jt = j0 + (j1 - j0) / DC_NR * DC_NR;
            for (ptrdiff_t i = 0; i < M; i += DC_MR) {
                ptrdiff_t rows = M - i < DC_MR ? M - i : DC_MR;
                const double *a = A + i * K;
                double *c = C + i * N;
                if (rows == DC_MR)
                    for (ptrdiff_t j = j0; j < jt; j += DC_NR)
                        dc_tile(a, B + j, c + j, K, N, k0, k1);
                else
                    dc_edge(a, B + j0, c + j0, K, N, rows, jt - j0, k0, k1);
                dc_edge(a, B + jt, c + jt, K, N, rows, j1 - jt, k0, k1);
            }
        }
    }
}

#endif
