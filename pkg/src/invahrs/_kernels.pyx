# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""
Compiled hot kernels: Riccati recursion and per-sample filter steps.

Same signatures and semantics as ``_pykernels``. Matrices are C-contiguous
float64; small fixed sizes live on the stack.
"""

from libc.math cimport sqrt, isfinite, INFINITY
from libc.stdlib cimport malloc, free

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3

NAME = "cython"

# ---------------------------------------------------------------- small algebra

cdef inline void qmul(const double* p, const double* q, double* o) noexcept nogil:
    o[0] = p[0]*q[0] - p[1]*q[1] - p[2]*q[2] - p[3]*q[3]
    o[1] = p[0]*q[1] + p[1]*q[0] + p[2]*q[3] - p[3]*q[2]
    o[2] = p[0]*q[2] - p[1]*q[3] + p[2]*q[0] + p[3]*q[1]
    o[3] = p[0]*q[3] + p[1]*q[2] - p[2]*q[1] + p[3]*q[0]


cdef inline void rotmat(const double* q, double* R) noexcept nogil:
    cdef double a = q[0], b = q[1], c = q[2], d = q[3]
    R[0] = a*a + b*b - c*c - d*d
    R[1] = 2*(b*c - a*d)
    R[2] = 2*(b*d + a*c)
    R[3] = 2*(b*c + a*d)
    R[4] = a*a - b*b + c*c - d*d
    R[5] = 2*(c*d - a*b)
    R[6] = 2*(b*d - a*c)
    R[7] = 2*(c*d + a*b)
    R[8] = a*a - b*b - c*c + d*d


cdef inline void mv3(const double* R, const double* v, double* o) noexcept nogil:
    o[0] = R[0]*v[0] + R[1]*v[1] + R[2]*v[2]
    o[1] = R[3]*v[0] + R[4]*v[1] + R[5]*v[2]
    o[2] = R[6]*v[0] + R[7]*v[1] + R[8]*v[2]


cdef inline void mtv3(const double* R, const double* v, double* o) noexcept nogil:
    o[0] = R[0]*v[0] + R[3]*v[1] + R[6]*v[2]
    o[1] = R[1]*v[0] + R[4]*v[1] + R[7]*v[2]
    o[2] = R[2]*v[0] + R[5]*v[1] + R[8]*v[2]


cdef inline void cross(const double* a, const double* b, double* o) noexcept nogil:
    o[0] = a[1]*b[2] - a[2]*b[1]
    o[1] = a[2]*b[0] - a[0]*b[2]
    o[2] = a[0]*b[1] - a[1]*b[0]


cdef inline void skew_into(const double* v, double* S, int ld, int r0, int c0, double s) noexcept nogil:
    # S[r0:r0+3, c0:c0+3] += s * [v]x   (row stride ld)
    S[(r0+0)*ld + c0+1] -= s*v[2]
    S[(r0+0)*ld + c0+2] += s*v[1]
    S[(r0+1)*ld + c0+0] += s*v[2]
    S[(r0+1)*ld + c0+2] -= s*v[0]
    S[(r0+2)*ld + c0+0] -= s*v[1]
    S[(r0+2)*ld + c0+1] += s*v[0]


cdef inline void normalize4(double* q) noexcept nogil:
    cdef double n = sqrt(q[0]*q[0] + q[1]*q[1] + q[2]*q[2] + q[3]*q[3])
    q[0] /= n
    q[1] /= n
    q[2] /= n
    q[3] /= n


cdef inline void propagate(double* q, const double* b, const double* wm, double dt, double* w) noexcept nogil:
    cdef double wq[4]
    cdef double dq[4]
    cdef int i
    w[0] = wm[0] - b[0]
    w[1] = wm[1] - b[1]
    w[2] = wm[2] - b[2]
    wq[0] = 0.0
    wq[1] = w[0]
    wq[2] = w[1]
    wq[3] = w[2]
    qmul(q, wq, dq)
    for i in range(4):
        q[i] = q[i] + 0.5*dt*dq[i]
    normalize4(q)


# C = A @ B, A (n x k), B (k x m)
cdef inline void mm(const double* A, const double* B, double* C, int n, int k, int m) noexcept nogil:
    cdef int i, j, l
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += A[i*k + l]*B[l*m + j]
            C[i*m + j] = s


# C = A @ B^T, A (n x k), B (m x k)
cdef inline void mmt(const double* A, const double* B, double* C, int n, int k, int m) noexcept nogil:
    cdef int i, j, l
    cdef double s
    for i in range(n):
        for j in range(m):
            s = 0.0
            for l in range(k):
                s += A[i*k + l]*B[j*k + l]
            C[i*m + j] = s


cdef int cholesky(double* S, int m) noexcept nogil:
    # in-place lower Cholesky factor; returns non-zero if not positive definite
    cdef int i, j, l
    cdef double s
    for j in range(m):
        s = S[j*m + j]
        for l in range(j):
            s -= S[j*m + l]*S[j*m + l]
        if not (s > 0.0):
            return 1
        S[j*m + j] = sqrt(s)
        for i in range(j + 1, m):
            s = S[i*m + j]
            for l in range(j):
                s -= S[i*m + l]*S[j*m + l]
            S[i*m + j] = s / S[j*m + j]
    return 0


cdef int gain_c(const double* P, const double* C, const double* Rd, double* K,
                int n, int m, double* PCt, double* S) noexcept nogil:
    # K = P C^T (C P C^T + Rd)^-1 via Cholesky of S; rows of K solved independently
    cdef int i, j, l
    cdef double s
    mmt(P, C, PCt, n, n, m)
    mm(C, PCt, S, m, n, m)
    for i in range(m*m):
        S[i] += Rd[i]
    if cholesky(S, m):
        return 2
    for i in range(n):
        # forward: L y = PCt[i, :]
        for j in range(m):
            s = PCt[i*m + j]
            for l in range(j):
                s -= S[j*m + l]*K[i*m + l]
            K[i*m + j] = s / S[j*m + j]
        # backward: L^T x = y
        for j in range(m - 1, -1, -1):
            s = K[i*m + j]
            for l in range(j + 1, m):
                s -= S[l*m + j]*K[i*m + l]
            K[i*m + j] = s / S[j*m + j]
    return 0


cdef int riccati_step_c(const double* Ad, const double* C, const double* Qd, const double* Rd,
                        const double* P, double* Pn, int n, int m, double* work) noexcept nogil:
    # work needs 2*n*m + m*m + 3*n*n doubles
    cdef double* K = work
    cdef double* PCt = K + n*m
    cdef double* S = PCt + n*m
    cdef double* CP = S + m*m
    cdef double* Pu = CP + n*n
    cdef double* T = Pu + n*n
    cdef int i, j
    if gain_c(P, C, Rd, K, n, m, PCt, S):
        return 2
    mm(C, P, CP, m, n, n)
    mm(K, CP, Pu, n, m, n)
    for i in range(n*n):
        Pu[i] = P[i] - Pu[i]
    mm(Ad, Pu, T, n, n, n)
    mmt(T, Ad, Pn, n, n, n)
    for i in range(n):
        for j in range(i, n):
            Pn[i*n + j] = 0.5*(Pn[i*n + j] + Pn[j*n + i]) + 0.5*(Qd[i*n + j] + Qd[j*n + i])
            Pn[j*n + i] = Pn[i*n + j]
    return 0


# ---------------------------------------------------------------- public API

def riccati_gain(const double[:, ::1] P, const double[:, ::1] C, const double[:, ::1] Rd, double[:, ::1] K):
    cdef int n = P.shape[0], m = C.shape[0]
    cdef double* buf = <double*> malloc((n*m + m*m) * sizeof(double))
    cdef int st
    with nogil:
        st = gain_c(&P[0, 0], &C[0, 0], &Rd[0, 0], &K[0, 0], n, m, buf, buf + n*m)
    free(buf)
    return st


def riccati_step(const double[:, ::1] Ad, const double[:, ::1] C, const double[:, ::1] Qd,
                 const double[:, ::1] Rd, const double[:, ::1] P, double[:, ::1] Pn):
    cdef int n = P.shape[0], m = C.shape[0]
    cdef double* work = <double*> malloc((2*n*m + m*m + 3*n*n) * sizeof(double))
    cdef int st
    with nogil:
        st = riccati_step_c(&Ad[0, 0], &C[0, 0], &Qd[0, 0], &Rd[0, 0], &P[0, 0], &Pn[0, 0], n, m, work)
    free(work)
    return st


def dare_fixed_point(const double[:, ::1] Ad, const double[:, ::1] C, const double[:, ::1] Qd,
                     const double[:, ::1] Rd, double[:, ::1] P, double tol, long max_iter):
    cdef int n = P.shape[0], m = C.shape[0]
    cdef double* work = <double*> malloc((2*n*m + m*m + 4*n*n) * sizeof(double))
    cdef double* Pn = work + 2*n*m + m*m + 3*n*n
    cdef double* Pp = &P[0, 0]
    cdef double res = INFINITY, d
    cdef long it = 0
    cdef int st = 1, i
    with nogil:
        while it < max_iter:
            it += 1
            if riccati_step_c(&Ad[0, 0], &C[0, 0], &Qd[0, 0], &Rd[0, 0], Pp, Pn, n, m, work):
                st = 2
                break
            res = 0.0
            for i in range(n*n):
                d = Pn[i] - Pp[i]
                res += d*d
                Pp[i] = Pn[i]
            res = sqrt(res)
            if not isfinite(res):
                st = 3
                break
            if res <= tol:
                st = 0
                break
    free(work)
    return st, it, res


def riccati_iterate(const double[:, ::1] Ad, const double[:, ::1] C, const double[:, ::1] Qd,
                    const double[:, ::1] Rd, double[:, ::1] P, long steps):
    cdef int n = P.shape[0], m = C.shape[0]
    cdef double* work = <double*> malloc((2*n*m + m*m + 4*n*n) * sizeof(double))
    cdef double* Pn = work + 2*n*m + m*m + 3*n*n
    cdef double* Pp = &P[0, 0]
    cdef long it = 0
    cdef int st = 0, i, same
    with nogil:
        while it < steps:
            it += 1
            if riccati_step_c(&Ad[0, 0], &C[0, 0], &Qd[0, 0], &Rd[0, 0], Pp, Pn, n, m, work):
                st = 2
                break
            same = 1
            for i in range(n*n):
                if Pn[i] != Pp[i]:
                    same = 0
                Pp[i] = Pn[i]
            if not finite_n(Pp, n*n):
                st = 3
                break
            if same:
                break
    free(work)
    return st, it


cdef inline int finite_n(const double* x, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        if not isfinite(x[i]):
            return 0
    return 1


def ncf_step(double[::1] q, double[::1] b, const double[::1] wm, const double[::1] ya,
             const double[::1] yb, double dt, const double[::1] ge, const double[::1] be,
             double kp, double ki, double k1, double k2, double[::1] E):
    cdef double w[3]
    cdef double R[9]
    cdef double yh[3]
    cdef double e[4]
    cdef double dq[4]
    cdef int i
    cdef bint ok
    with nogil:
        propagate(&q[0], &b[0], &wm[0], dt, w)
        rotmat(&q[0], R)
        mtv3(R, &ge[0], yh)
        yh[0] = -yh[0]
        yh[1] = -yh[1]
        yh[2] = -yh[2]
        cross(yh, &ya[0], &E[0])
        mtv3(R, &be[0], yh)
        cross(yh, &yb[0], &E[3])
        e[0] = 0.0
        for i in range(3):
            e[i + 1] = k1*E[i] + k2*E[i + 3]
        qmul(&q[0], e, dq)
        for i in range(4):
            q[i] = q[i] - dt*kp*dq[i]
        normalize4(&q[0])
        for i in range(3):
            b[i] = b[i] + dt*ki*e[i + 1]
        ok = finite_n(&q[0], 4) and finite_n(&b[0], 3)
    return 0 if ok else 3


def rincf_step(double[::1] q, double[::1] b, const double[::1] wm, const double[::1] ya,
               const double[::1] yb, double dt, const double[::1] ge, const double[::1] be,
               const double[:, ::1] K, double p1, double p2, const double[:, ::1] keep,
               double[::1] E, double[:, ::1] Keff):
    cdef double w[3]
    cdef double R[9]
    cdef double yh[3]
    cdef double c[3]
    cdef double Iw[3]
    cdef double v[4]
    cdef double u[3]
    cdef double bu[3]
    cdef double dq[4]
    cdef double* Ke = &Keff[0, 0]
    cdef double s
    cdef int i, j
    cdef bint ok
    with nogil:
        propagate(&q[0], &b[0], &wm[0], dt, w)
        rotmat(&q[0], R)
        mtv3(R, &ge[0], yh)
        yh[0] = -yh[0]
        yh[1] = -yh[1]
        yh[2] = -yh[2]
        cross(yh, &ya[0], c)
        mv3(R, c, &E[0])
        mtv3(R, &be[0], yh)
        cross(yh, &yb[0], c)
        mv3(R, c, &E[3])
        mv3(R, w, Iw)
        for i in range(36):
            Ke[i] = (&K[0, 0])[i]
        skew_into(Iw, Ke, 6, 3, 0, p1)
        skew_into(Iw, Ke, 6, 3, 3, p2)
        for i in range(36):
            Ke[i] = Ke[i]*(&keep[0, 0])[i]
        v[0] = 0.0
        for i in range(3):
            s = 0.0
            for j in range(6):
                s += Ke[i*6 + j]*E[j]
            v[i + 1] = s
            s = 0.0
            for j in range(6):
                s += Ke[(i + 3)*6 + j]*E[j]
            u[i] = s
        qmul(v, &q[0], dq)
        for i in range(4):
            q[i] = q[i] + dq[i]
        normalize4(&q[0])
        mtv3(R, u, bu)
        for i in range(3):
            b[i] = b[i] + bu[i]
        ok = finite_n(&q[0], 4) and finite_n(&b[0], 3)
    return 0 if ok else 3


def iekf_step(bint right, double[::1] q, double[::1] b, double[:, ::1] P, const double[::1] wm,
              const double[::1] ya, const double[::1] yb, double dt, const double[::1] ge,
              const double[::1] be, const double[:, ::1] Q, const double[:, ::1] R6,
              double[::1] E, double[:, ::1] K):
    cdef double w[3]
    cdef double R[9]
    cdef double g[3]
    cdef double mref[3]
    cdef double yh[3]
    cdef double c[3]
    cdef double Iw[3]
    cdef double v[4]
    cdef double u[3]
    cdef double bu[3]
    cdef double dq[4]
    cdef double Ad[36]
    cdef double C[36]
    cdef double Qd[36]
    cdef double Rd[36]
    cdef double N[36]
    cdef double T[36]
    cdef double PCt[36]
    cdef double S[36]
    cdef double CP[36]
    cdef double Sg[9]
    cdef double Sm[9]
    cdef double* Pp = &P[0, 0]
    cdef double* Kp = &K[0, 0]
    cdef double s, dt2 = dt*dt
    cdef int i, j, l, st = 0
    with nogil:
        propagate(&q[0], &b[0], &wm[0], dt, w)
        rotmat(&q[0], R)
        if right:
            for i in range(3):
                g[i] = ge[i]
                mref[i] = be[i]
        else:
            mtv3(R, &ge[0], g)
            mtv3(R, &be[0], mref)
        for i in range(9):
            Sg[i] = 0.0
            Sm[i] = 0.0
        skew_into(g, Sg, 3, 0, 0, 1.0)
        skew_into(mref, Sm, 3, 0, 0, 1.0)
        # Ad = I + A dt
        for i in range(36):
            Ad[i] = 0.0
            C[i] = 0.0
            N[i] = 0.0
            Qd[i] = 0.0
        for i in range(6):
            Ad[i*6 + i] = 1.0
        for i in range(3):
            Ad[i*6 + 3 + i] = -0.5*dt
        if right:
            mv3(R, w, Iw)
            skew_into(Iw, Ad, 6, 3, 3, dt)
        else:
            skew_into(w, Ad, 6, 0, 0, -dt)
        # C = [[2 Sg^2, 0], [2 Sm^2, 0]]
        for i in range(3):
            for j in range(3):
                s = 0.0
                for l in range(3):
                    s += Sg[i*3 + l]*Sg[l*3 + j]
                C[i*6 + j] = 2.0*s
                s = 0.0
                for l in range(3):
                    s += Sm[i*3 + l]*Sm[l*3 + j]
                C[(i + 3)*6 + j] = 2.0*s
        # N = blockdiag(I + Sg, I - Sm)
        for i in range(3):
            N[i*6 + i] = 1.0
            N[(i + 3)*6 + i + 3] = 1.0
            for j in range(3):
                N[i*6 + j] += Sg[i*3 + j]
                N[(i + 3)*6 + j + 3] -= Sm[i*3 + j]
        # Qd = M Q M^T dt^2 with M = blockdiag(0.5 I, -I)
        for i in range(6):
            for j in range(6):
                s = (&Q[0, 0])[i*6 + j]*dt2
                if i < 3:
                    s *= 0.5
                else:
                    s = -s
                if j < 3:
                    s *= 0.5
                else:
                    s = -s
                Qd[i*6 + j] = s
        # Rd = N R N^T
        mm(N, &R6[0, 0], T, 6, 6, 6)
        mmt(T, N, Rd, 6, 6, 6)
        # predict P
        mm(Ad, Pp, T, 6, 6, 6)
        mmt(T, Ad, Pp, 6, 6, 6)
        for i in range(36):
            Pp[i] += Qd[i]
        if gain_c(Pp, C, Rd, Kp, 6, 6, PCt, S):
            st = 2
        else:
            # P <- sym(P - K C P)
            mm(C, Pp, CP, 6, 6, 6)
            mm(Kp, CP, T, 6, 6, 6)
            for i in range(36):
                Pp[i] -= T[i]
            for i in range(6):
                for j in range(i + 1, 6):
                    s = 0.5*(Pp[i*6 + j] + Pp[j*6 + i])
                    Pp[i*6 + j] = s
                    Pp[j*6 + i] = s
            # output error
            mtv3(R, &ge[0], yh)
            yh[0] = -yh[0]
            yh[1] = -yh[1]
            yh[2] = -yh[2]
            cross(yh, &ya[0], c)
            if right:
                mv3(R, c, &E[0])
            else:
                E[0] = c[0]
                E[1] = c[1]
                E[2] = c[2]
            mtv3(R, &be[0], yh)
            cross(yh, &yb[0], c)
            if right:
                mv3(R, c, &E[3])
            else:
                E[3] = c[0]
                E[4] = c[1]
                E[5] = c[2]
            v[0] = 0.0
            for i in range(3):
                s = 0.0
                for j in range(6):
                    s += Kp[i*6 + j]*E[j]
                v[i + 1] = s
                s = 0.0
                for j in range(6):
                    s += Kp[(i + 3)*6 + j]*E[j]
                u[i] = s
            if right:
                qmul(v, &q[0], dq)
                mtv3(R, u, bu)
            else:
                qmul(&q[0], v, dq)
                bu[0] = u[0]
                bu[1] = u[1]
                bu[2] = u[2]
            for i in range(4):
                q[i] = q[i] + dq[i]
            normalize4(&q[0])
            for i in range(3):
                b[i] = b[i] + bu[i]
            if not (finite_n(&q[0], 4) and finite_n(&b[0], 3) and finite_n(Pp, 36)):
                st = 3
    return st
