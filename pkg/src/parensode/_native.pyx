# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, nonecheck=False
"""Compiled per-trajectory kernels for the registry models.

Every loop here mirrors the pure-Python reference operation for operation,
so in double precision the explicit schemes and the SDE kernels produce
bitwise-identical output. All work buffers live on the stack; the chunk
entry points release the GIL so threads can run trajectories concurrently.
"""

from libc.math cimport sqrt, pow, log, cos, sin, fabs, isfinite, INFINITY
from libc.stdint cimport uint64_t, int64_t, int32_t

ctypedef fused real:
    float
    double

cdef enum:
    MAXN = 32
    MAXAUX = 560

# model ids, shared with problems.py
cdef enum:
    LORENZ = 1
    BALL = 2
    ROBER = 3
    OREGO = 4
    HIRES = 5
    POLLU = 6
    LINEAR = 7
    GBM = 8
    CRN = 9

cdef enum:
    ALG_TSIT5 = 0
    ALG_ROS23 = 1
    ALG_EM = 2
    ALG_SIEA = 3

cdef enum:
    RET_SUCCESS = 0
    RET_MAXITERS = 1
    RET_DTBELOWMIN = 2
    RET_DIVERGED = 3

cdef enum:
    MAX_REJECTS = 20

cdef double DBL_EPS = 2.220446049250313e-16
cdef double FLT_EPS = 1.1920928955078125e-07
cdef double ROS_D = 1.0 / (2.0 + sqrt(2.0))
cdef double ROS_C32 = 6.0 + sqrt(2.0)
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0

# Tsitouras 5(4) coefficients as C literals so the compiler can fold them.
cdef extern from *:
    """
    #define TS_C2 (0.161)
    #define TS_C3 (0.327)
    #define TS_C4 (0.9)
    #define TS_C5 (0.9800255409045097)
    #define TS_A21 (0.161)
    #define TS_A31 (-0.008480655492356989)
    #define TS_A32 (0.335480655492357)
    #define TS_A41 (2.897153057105493)
    #define TS_A42 (-6.359448489975075)
    #define TS_A43 (4.3622954328695815)
    #define TS_A51 (5.325864828439257)
    #define TS_A52 (-11.748883564062828)
    #define TS_A53 (7.4955393428898365)
    #define TS_A54 (-0.09249506636175525)
    #define TS_A61 (5.86145544294642)
    #define TS_A62 (-12.92096931784711)
    #define TS_A63 (8.159367898576159)
    #define TS_A64 (-0.071584973281401)
    #define TS_A65 (-0.028269050394068383)
    #define TS_B1 (0.09646076681806523)
    #define TS_B2 (0.01)
    #define TS_B3 (0.4798896504144996)
    #define TS_B4 (1.379008574103742)
    #define TS_B5 (-3.290069515436081)
    #define TS_B6 (2.324710524099774)
    #define TS_E1 (-0.00178001105222577714)
    #define TS_E2 (-0.0008164344596567469)
    #define TS_E3 (0.007880878010261995)
    #define TS_E4 (-0.1447110071732629)
    #define TS_E5 (0.5823571654525552)
    #define TS_E6 (-0.45808210592918697)
    #define TS_E7 (1.0 / 66.0)
    """
    const double C2 "TS_C2"
    const double C3 "TS_C3"
    const double C4 "TS_C4"
    const double C5 "TS_C5"
    const double A21 "TS_A21"
    const double A31 "TS_A31"
    const double A32 "TS_A32"
    const double A41 "TS_A41"
    const double A42 "TS_A42"
    const double A43 "TS_A43"
    const double A51 "TS_A51"
    const double A52 "TS_A52"
    const double A53 "TS_A53"
    const double A54 "TS_A54"
    const double A61 "TS_A61"
    const double A62 "TS_A62"
    const double A63 "TS_A63"
    const double A64 "TS_A64"
    const double A65 "TS_A65"
    const double B1 "TS_B1"
    const double B2 "TS_B2"
    const double B3 "TS_B3"
    const double B4 "TS_B4"
    const double B5 "TS_B5"
    const double B6 "TS_B6"
    const double E1 "TS_E1"
    const double E2 "TS_E2"
    const double E3 "TS_E3"
    const double E4 "TS_E4"
    const double E5 "TS_E5"
    const double E6 "TS_E6"
    const double E7 "TS_E7"

cdef struct Cfg:
    int algo
    int adaptive
    int every
    int cap
    int order
    int64_t max_steps
    int64_t nsteps
    double t0
    double tf
    double dt0
    int has_dt0
    double abstol
    double rtol
    double dtmin
    double dtmax
    double eta
    double alpha
    double beta
    double qmin
    double qmax


# ----------------------------------------------------------------------------
# models
# ----------------------------------------------------------------------------

cdef inline real _pos(real x) noexcept nogil:
    return x if x > 0 else 0.0


cdef void frhs(int model, int n, const real* u, const real* p, double t, real* du) noexcept nogil:
    cdef int i
    if model == LORENZ:
        du[0] = p[0] * (u[1] - u[0])
        du[1] = p[1] * u[0] - u[1] - u[0] * u[2]
        du[2] = u[0] * u[1] - p[2] * u[2]
    elif model == BALL:
        du[0] = u[1]
        du[1] = -p[0]
    elif model == ROBER:
        du[0] = -p[0] * u[0] + p[2] * u[1] * u[2]
        du[1] = p[0] * u[0] - p[2] * u[1] * u[2] - p[1] * u[1] * u[1]
        du[2] = p[1] * u[1] * u[1]
    elif model == OREGO:
        du[0] = p[0] * (u[1] + u[0] * (1.0 - p[1] * u[0] - u[1]))
        du[1] = (u[2] - (1.0 + u[0]) * u[1]) / p[0]
        du[2] = p[2] * (u[0] - u[2])
    elif model == HIRES:
        du[0] = -1.71 * u[0] + 0.43 * u[1] + 8.32 * u[2] + 0.0007
        du[1] = 1.71 * u[0] - 8.75 * u[1]
        du[2] = -10.03 * u[2] + 0.43 * u[3] + 0.035 * u[4]
        du[3] = 8.32 * u[1] + 1.71 * u[2] - 1.12 * u[3]
        du[4] = -1.745 * u[4] + 0.43 * u[5] + 0.43 * u[6]
        du[5] = -280.0 * u[5] * u[7] + 0.69 * u[3] + 1.71 * u[4] - 0.43 * u[5] + 0.69 * u[6]
        du[6] = 280.0 * u[5] * u[7] - 1.81 * u[6]
        du[7] = -280.0 * u[5] * u[7] + 1.81 * u[6]
    elif model == POLLU:
        du[0] = -p[0] * u[0] - p[9] * u[10] * u[0] - p[13] * u[0] * u[5] - p[22] * u[0] * u[3] - p[23] * u[18] * u[0] + p[1] * u[1] * u[3] + p[2] * u[4] * u[1] + p[8] * u[10] * u[1] + p[10] * u[12] + p[11] * u[9] * u[1] + p[21] * u[18] + p[24] * u[19]
        du[1] = -p[1] * u[1] * u[3] - p[2] * u[4] * u[1] - p[8] * u[10] * u[1] - p[11] * u[9] * u[1] + p[0] * u[0] + p[20] * u[18]
        du[2] = -p[14] * u[2] + p[0] * u[0] + p[16] * u[3] + p[18] * u[15] + p[21] * u[18]
        du[3] = -p[1] * u[1] * u[3] - p[15] * u[3] - p[16] * u[3] - p[22] * u[0] * u[3] + p[14] * u[2]
        du[4] = -p[2] * u[4] * u[1] + 2.0 * p[3] * u[6] + p[5] * u[6] * u[5] + p[6] * u[8] + p[12] * u[13] + p[19] * u[16] * u[5]
        du[5] = -p[5] * u[6] * u[5] - p[7] * u[8] * u[5] - p[13] * u[0] * u[5] - p[19] * u[16] * u[5] + p[2] * u[4] * u[1] + 2.0 * p[17] * u[15]
        du[6] = -p[3] * u[6] - p[4] * u[6] - p[5] * u[6] * u[5] + p[12] * u[13]
        du[7] = p[3] * u[6] + p[4] * u[6] + p[5] * u[6] * u[5] + p[6] * u[8]
        du[8] = -p[6] * u[8] - p[7] * u[8] * u[5]
        du[9] = -p[11] * u[9] * u[1] + p[6] * u[8] + p[8] * u[10] * u[1]
        du[10] = -p[8] * u[10] * u[1] - p[9] * u[10] * u[0] + p[7] * u[8] * u[5] + p[10] * u[12]
        du[11] = p[8] * u[10] * u[1]
        du[12] = -p[10] * u[12] + p[9] * u[10] * u[0]
        du[13] = -p[12] * u[13] + p[11] * u[9] * u[1]
        du[14] = p[13] * u[0] * u[5]
        du[15] = -p[17] * u[15] - p[18] * u[15] + p[15] * u[3]
        du[16] = -p[19] * u[16] * u[5]
        du[17] = p[19] * u[16] * u[5]
        du[18] = -p[20] * u[18] - p[21] * u[18] - p[23] * u[18] * u[0] + p[22] * u[0] * u[3] + p[24] * u[19]
        du[19] = -p[24] * u[19] + p[23] * u[18] * u[0]
    elif model == LINEAR:
        du[0] = p[0] * u[0]
    elif model == GBM:
        for i in range(n):
            du[i] = p[0] * u[i]
    elif model == CRN:
        du[0] = p[3] + _crn_hill(u, p) - u[0]
        du[1] = u[0] / p[2] - u[1] / p[2]
        du[2] = u[1] / p[2] - u[2] / p[2]
        du[3] = u[2] / p[2] - u[3] / p[2]


cdef inline real _crn_hill(const real* u, const real* p) noexcept nogil:
    cdef real a = pow(_pos(p[0] * u[0]), p[4])
    cdef real b = pow(_pos(p[1] * u[3]), p[4])
    return a / (a + b + 1.0)


cdef void fjac(int model, int n, const real* u, const real* p, double t, real* J) noexcept nogil:
    """Row-major analytic Jacobian."""
    cdef int i
    for i in range(n * n):
        J[i] = 0.0
    if model == LORENZ:
        J[0] = -p[0]; J[1] = p[0]
        J[3] = p[1] - u[2]; J[4] = -1.0; J[5] = -u[0]
        J[6] = u[1]; J[7] = u[0]; J[8] = -p[2]
    elif model == BALL:
        J[1] = 1.0
    elif model == ROBER:
        J[0] = -p[0]; J[1] = p[2] * u[2]; J[2] = p[2] * u[1]
        J[3] = p[0]; J[4] = -p[2] * u[2] - 2.0 * p[1] * u[1]; J[5] = -p[2] * u[1]
        J[7] = 2.0 * p[1] * u[1]
    elif model == OREGO:
        J[0] = p[0] * (1.0 - 2.0 * p[1] * u[0] - u[1]); J[1] = p[0] * (1.0 - u[0])
        J[3] = -u[1] / p[0]; J[4] = -(1.0 + u[0]) / p[0]; J[5] = 1.0 / p[0]
        J[6] = p[2]; J[8] = -p[2]
    elif model == HIRES:
        J[0] = -1.71; J[1] = 0.43; J[2] = 8.32
        J[8] = 1.71; J[9] = -8.75
        J[18] = -10.03; J[19] = 0.43; J[20] = 0.035
        J[25] = 8.32; J[26] = 1.71; J[27] = -1.12
        J[36] = -1.745; J[37] = 0.43; J[38] = 0.43
        J[43] = 0.69; J[44] = 1.71; J[45] = -280.0 * u[7] - 0.43; J[46] = 0.69; J[47] = -280.0 * u[5]
        J[53] = 280.0 * u[7]; J[54] = -1.81; J[55] = 280.0 * u[5]
        J[61] = -280.0 * u[7]; J[62] = 1.81; J[63] = -280.0 * u[5]
    elif model == POLLU:
        J[0] = -p[0] - p[13]*u[5] - p[22]*u[3] - p[23]*u[18] - p[9]*u[10]
        J[1] = p[1]*u[3] + p[11]*u[9] + p[2]*u[4] + p[8]*u[10]
        J[3] = p[1]*u[1] - p[22]*u[0]
        J[4] = p[2]*u[1]
        J[5] = -p[13]*u[0]
        J[9] = p[11]*u[1]
        J[10] = p[8]*u[1] - p[9]*u[0]
        J[12] = p[10]
        J[18] = p[21] - p[23]*u[0]
        J[19] = p[24]
        J[20] = p[0]
        J[21] = -p[1]*u[3] - p[11]*u[9] - p[2]*u[4] - p[8]*u[10]
        J[23] = -p[1]*u[1]
        J[24] = -p[2]*u[1]
        J[29] = -p[11]*u[1]
        J[30] = -p[8]*u[1]
        J[38] = p[20]
        J[40] = p[0]
        J[42] = -p[14]
        J[43] = p[16]
        J[55] = p[18]
        J[58] = p[21]
        J[60] = -p[22]*u[3]
        J[61] = -p[1]*u[3]
        J[62] = p[14]
        J[63] = -p[1]*u[1] - p[15] - p[16] - p[22]*u[0]
        J[81] = -p[2]*u[4]
        J[84] = -p[2]*u[1]
        J[85] = p[19]*u[16] + p[5]*u[6]
        J[86] = 2.0*p[3] + p[5]*u[5]
        J[88] = p[6]
        J[93] = p[12]
        J[96] = p[19]*u[5]
        J[100] = -p[13]*u[5]
        J[101] = p[2]*u[4]
        J[104] = p[2]*u[1]
        J[105] = -p[13]*u[0] - p[19]*u[16] - p[5]*u[6] - p[7]*u[8]
        J[106] = -p[5]*u[5]
        J[108] = -p[7]*u[5]
        J[115] = 2.0*p[17]
        J[116] = -p[19]*u[5]
        J[125] = -p[5]*u[6]
        J[126] = -p[3] - p[4] - p[5]*u[5]
        J[133] = p[12]
        J[145] = p[5]*u[6]
        J[146] = p[3] + p[4] + p[5]*u[5]
        J[148] = p[6]
        J[165] = -p[7]*u[8]
        J[168] = -p[6] - p[7]*u[5]
        J[181] = -p[11]*u[9] + p[8]*u[10]
        J[188] = p[6]
        J[189] = -p[11]*u[1]
        J[190] = p[8]*u[1]
        J[200] = -p[9]*u[10]
        J[201] = -p[8]*u[10]
        J[205] = p[7]*u[8]
        J[208] = p[7]*u[5]
        J[210] = -p[8]*u[1] - p[9]*u[0]
        J[212] = p[10]
        J[221] = p[8]*u[10]
        J[230] = p[8]*u[1]
        J[240] = p[9]*u[10]
        J[250] = p[9]*u[0]
        J[252] = -p[10]
        J[261] = p[11]*u[9]
        J[269] = p[11]*u[1]
        J[273] = -p[12]
        J[280] = p[13]*u[5]
        J[285] = p[13]*u[0]
        J[303] = p[15]
        J[315] = -p[17] - p[18]
        J[325] = -p[19]*u[16]
        J[336] = -p[19]*u[5]
        J[345] = p[19]*u[16]
        J[356] = p[19]*u[5]
        J[360] = p[22]*u[3] - p[23]*u[18]
        J[363] = p[22]*u[0]
        J[378] = -p[20] - p[21] - p[23]*u[0]
        J[379] = p[24]
        J[380] = p[23]*u[18]
        J[398] = p[23]*u[0]
        J[399] = -p[24]
    elif model == LINEAR:
        J[0] = p[0]
    elif model == GBM:
        for i in range(n):
            J[i * n + i] = p[0]


cdef void fdiff(int model, int n, int m, const real* u, const real* p, double t, real* g) noexcept nogil:
    """Diagonal models fill n values; general models an n×m row-major matrix."""
    cdef int i
    if model == GBM:
        for i in range(n):
            g[i] = p[1] * u[i]
    elif model == CRN:
        for i in range(n * m):
            g[i] = 0.0
        g[0] = p[5] * sqrt(_pos(p[3] + _crn_hill(u, p)))
        g[1] = -p[5] * sqrt(_pos(u[0]))
        g[8 + 2] = p[5] * sqrt(_pos(u[0] / p[2]))
        g[8 + 3] = -p[5] * sqrt(_pos(u[1] / p[2]))
        g[16 + 4] = p[5] * sqrt(_pos(u[1] / p[2]))
        g[16 + 5] = -p[5] * sqrt(_pos(u[2] / p[2]))
        g[24 + 6] = p[5] * sqrt(_pos(u[2] / p[2]))
        g[24 + 7] = -p[5] * sqrt(_pos(u[3] / p[2]))


cdef inline bint _finite(int n, const real* v) noexcept nogil:
    cdef int i
    for i in range(n):
        if not isfinite(v[i]):
            return False
    return True


# ----------------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------------

cdef int lu_factor_inplace(int n, real* a, int* piv) noexcept nogil:
    """Partially pivoted LU in place (row-major); returns the singular flag."""
    cdef int i, j, k, p, tp
    cdef double amax = 0.0, ax, best, v, tiny, eps
    cdef real inv, m, tmp
    cdef int singular
    eps = FLT_EPS if real is float else DBL_EPS
    for i in range(n * n):
        ax = fabs(a[i])
        if ax > amax:
            amax = ax
    tiny = 1e3 * eps * amax
    singular = amax == 0.0
    for k in range(n):
        piv[k] = k
    for k in range(n):
        p = k
        best = fabs(a[k * n + k])
        for i in range(k + 1, n):
            v = fabs(a[i * n + k])
            if v > best:
                best = v
                p = i
        if p != k:
            for j in range(n):
                tmp = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = tmp
            tp = piv[k]
            piv[k] = piv[p]
            piv[p] = tp
        if best < tiny or best == 0.0:
            singular = 1
            continue
        inv = 1.0 / a[k * n + k]
        for i in range(k + 1, n):
            m = a[i * n + k] * inv
            a[i * n + k] = m
            if m != 0.0:
                for j in range(k + 1, n):
                    a[i * n + j] -= m * a[k * n + j]
    return singular


cdef void lu_solve_into(int n, const real* lu, const int* piv, const real* b, real* x) noexcept nogil:
    cdef int i, j
    cdef real s
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(n):
        s = x[i]
        for j in range(i):
            s -= lu[i * n + j] * x[j]
        x[i] = s
    for i in range(n - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            s -= lu[i * n + j] * x[j]
        x[i] = s / lu[i * n + i]


# ----------------------------------------------------------------------------
# step control
# ----------------------------------------------------------------------------

cdef double error_q(int n, const real* E, const real* a, const real* b, double atol, double rtol) noexcept nogil:
    cdef int i
    cdef double s = 0.0, e, aa, bb, x, q
    for i in range(n):
        e = E[i]
        if not isfinite(e):
            return INFINITY
        aa = fabs(a[i])
        bb = fabs(b[i])
        x = e / (atol + rtol * (aa if aa > bb else bb))
        s += x * x
    q = sqrt(s / n)
    return q if isfinite(q) else INFINITY


cdef double initial_step(int model, int n, const real* u0, const real* p, const real* f0, Cfg* c,
                         int64_t* nf) noexcept nogil:
    cdef int i
    cdef double sc[MAXN]
    cdef real u1[MAXN]
    cdef real f1[MAXN]
    cdef double span = c.tf - c.t0
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, x, h, h0, h1, dm
    if c.has_dt0:
        return c.dt0
    for i in range(n):
        sc[i] = c.abstol + fabs(<double>u0[i]) * c.rtol
    for i in range(n):
        x = u0[i] / sc[i]
        d0 += x * x
    d0 = sqrt(d0 / n)
    for i in range(n):
        x = f0[i] / sc[i]
        d1 += x * x
    d1 = sqrt(d1 / n)
    if d1 == 0.0 or not isfinite(d1):
        h = 1e-6 * span
    else:
        if d0 >= 1e-5 and d1 >= 1e-5:
            h0 = 0.01 * d0 / d1
        else:
            h0 = 1e-6
        if h0 > span:
            h0 = span
        for i in range(n):
            u1[i] = u0[i] + h0 * f0[i]
        frhs(model, n, u1, p, c.t0 + h0, f1)
        nf[0] += 1
        for i in range(n):
            x = (f1[i] - f0[i]) / sc[i]
            d2 += x * x
        d2 = sqrt(d2 / n) / h0
        dm = d1 if d1 > d2 else d2
        if not isfinite(dm):
            h1 = h0 * 1e-3
        elif dm <= 1e-15:
            h1 = h0 * 1e-3
            if h1 < 1e-6:
                h1 = 1e-6
        else:
            h1 = pow(0.01 / dm, 1.0 / (c.order + 1))
        h = 100.0 * h0 if 100.0 * h0 < h1 else h1
    if h > c.dtmax:
        h = c.dtmax
    if h > span:
        h = span
    if h < c.dtmin:
        h = c.dtmin
    return h


# ----------------------------------------------------------------------------
# ODE steps and interpolants
# ----------------------------------------------------------------------------

cdef void tsit5_stages(int model, int n, const real* u, const real* p, double t, double hd,
                       const real* k1, real* K, real* unew, real* k7) noexcept nogil:
    """K receives k2..k6 at stride MAXN; k1 is the FSAL derivative, k7 = f(unew)."""
    cdef int i
    cdef real h = <real>hd
    cdef real tmp[MAXN]
    cdef real* k2 = K
    cdef real* k3 = K + MAXN
    cdef real* k4 = K + 2 * MAXN
    cdef real* k5 = K + 3 * MAXN
    cdef real* k6 = K + 4 * MAXN
    for i in range(n):
        tmp[i] = u[i] + h * (A21 * k1[i])
    frhs(model, n, tmp, p, t + C2 * hd, k2)
    for i in range(n):
        tmp[i] = u[i] + h * (A31 * k1[i] + A32 * k2[i])
    frhs(model, n, tmp, p, t + C3 * hd, k3)
    for i in range(n):
        tmp[i] = u[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
    frhs(model, n, tmp, p, t + C4 * hd, k4)
    for i in range(n):
        tmp[i] = u[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
    frhs(model, n, tmp, p, t + C5 * hd, k5)
    for i in range(n):
        tmp[i] = u[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
    frhs(model, n, tmp, p, t + hd, k6)
    for i in range(n):
        unew[i] = u[i] + h * (B1 * k1[i] + B2 * k2[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
    frhs(model, n, unew, p, t + hd, k7)


cdef void tsit5_err(int n, double hd, const real* k1, const real* K, const real* k7, real* err) noexcept nogil:
    cdef int i
    cdef real h = <real>hd
    for i in range(n):
        err[i] = h * (E1 * k1[i] + E2 * K[i] + E3 * K[MAXN + i] + E4 * K[2 * MAXN + i]
                      + E5 * K[3 * MAXN + i] + E6 * K[4 * MAXN + i] + E7 * k7[i])


cdef void tsit5_interp(int n, const real* u, double hd, const real* k1, const real* K, const real* k7,
                       double th, real* out) noexcept nogil:
    cdef int i
    cdef real h = <real>hd
    cdef double t2 = th * th
    cdef double w1 = -1.0530884977290216 * th * (th - 1.3299890189751412) * (t2 - 1.4364028541716351 * th + 0.7139816917074209)
    cdef double w2 = 0.1017 * t2 * (t2 - 2.1966568338249754 * th + 1.2949852507374631)
    cdef double w3 = 2.490627285651252793 * t2 * (t2 - 2.38535645472061657 * th + 1.57803468208092486)
    cdef double w4 = -16.54810288924490272 * (th - 1.21712927295533244) * (th - 0.61620406037800089) * t2
    cdef double w5 = 47.37952196281928122 * (th - 1.203071208372362603) * (th - 0.658047292653547382) * t2
    cdef double w6 = -34.87065786149660974 * (th - 1.2) * (th - 0.666666666666666667) * t2
    cdef double w7 = 2.5 * (th - 1.0) * (th - 0.6) * t2
    for i in range(n):
        out[i] = u[i] + h * (w1 * k1[i] + w2 * K[i] + w3 * K[MAXN + i] + w4 * K[2 * MAXN + i]
                             + w5 * K[3 * MAXN + i] + w6 * K[4 * MAXN + i] + w7 * k7[i])


cdef void hermite_interp(int n, const real* u, const real* f0, const real* u1, const real* f1, double hd,
                         double th, real* out) noexcept nogil:
    cdef int i
    cdef real h = <real>hd
    cdef real t = <real>th
    cdef real th1 = t - 1.0
    cdef real a = 1.0 - t
    cdef real c = t * th1
    cdef real m = 1.0 - 2.0 * t
    for i in range(n):
        out[i] = a * u[i] + t * u1[i] + c * (m * (u1[i] - u[i]) + th1 * h * f0[i] + t * h * f1[i])


cdef int ros23_step(int model, int n, const real* u, const real* p, double t, double hd, const real* f0,
                    int need_err, real* unew, real* fnew, real* err) noexcept nogil:
    """Returns 0 on success, 1 if W is singular. Registry models are autonomous."""
    cdef int i, j
    cdef real h = <real>hd
    cdef real J[MAXN * MAXN]
    cdef int piv[MAXN]
    cdef real gT[MAXN]
    cdef real r[MAXN]
    cdef real k1[MAXN]
    cdef real k2[MAXN]
    cdef real k3[MAXN]
    cdef real f1[MAXN]
    cdef real tmp[MAXN]
    cdef real dtg = h * ROS_D
    cdef real hh, h6
    fjac(model, n, u, p, t, J)
    for i in range(n):
        for j in range(n):
            J[i * n + j] = (1.0 if i == j else 0.0) - dtg * J[i * n + j]
    if lu_factor_inplace(n, J, piv):
        return 1
    for i in range(n):
        gT[i] = dtg * 0.0
        r[i] = f0[i] + gT[i]
    lu_solve_into(n, J, piv, r, k1)
    hh = 0.5 * h
    for i in range(n):
        tmp[i] = u[i] + hh * k1[i]
    frhs(model, n, tmp, p, t + 0.5 * hd, f1)
    for i in range(n):
        r[i] = f1[i] - k1[i]
    lu_solve_into(n, J, piv, r, k2)
    for i in range(n):
        k2[i] = k2[i] + k1[i]
        unew[i] = u[i] + h * k2[i]
    frhs(model, n, unew, p, t + hd, fnew)
    if need_err:
        for i in range(n):
            r[i] = fnew[i] - ROS_C32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]) + gT[i]
        lu_solve_into(n, J, piv, r, k3)
        h6 = h / 6.0
        for i in range(n):
            err[i] = h6 * (k1[i] - 2.0 * k2[i] + k3[i])
    return 0


# ----------------------------------------------------------------------------
# ODE driver
# ----------------------------------------------------------------------------

cdef int ode_integrate(int model, int n, const real* u0, const real* p, Cfg* c, real* S, double* T,
                       const double* G, int64_t* out_len, double* out_tend, int64_t* st) noexcept nogil:
    cdef int i, ret = RET_SUCCESS, is_tsit = c.algo == ALG_TSIT5, failed
    cdef real ubuf[2 * MAXN]
    cdef real fbuf[2 * MAXN]
    cdef real* u = ubuf
    cdef real* unew = ubuf + MAXN
    cdef real* f0 = fbuf
    cdef real* fnew = fbuf + MAXN
    cdef real* swp
    cdef real err[MAXN]
    cdef real K[5 * MAXN]
    cdef int64_t n_acc = 0, n_rej = 0, nf = 0, nj = 0, nfac = 0, k = 0, kfix = 0
    cdef double t = c.t0, tf = c.tf, t0 = c.t0, h, t_new, h_next, q, qc, fac, q_prev = 1.0, tg
    cdef double dt = c.dt0
    cdef int rejects = 0
    cdef int cap = c.cap

    for i in range(n):
        u[i] = u0[i]
    frhs(model, n, u, p, t, f0)
    nf += 1
    for i in range(n):
        S[i] = u[i]
    if c.every:
        T[0] = t
    k = 1
    if not _finite(n, f0) or not _finite(n, u):
        ret = RET_DIVERGED
    else:
        if c.adaptive:
            h = initial_step(model, n, u, p, f0, c, &nf)
        else:
            h = dt
        while t < tf:
            if n_acc >= c.max_steps:
                ret = RET_MAXITERS
                break
            if c.adaptive:
                if t + h * (1.0 + 1e-10) >= tf:
                    h = tf - t
                    t_new = tf
                else:
                    t_new = t + h
            else:
                if kfix + 1 >= c.nsteps:
                    t_new = tf
                else:
                    t_new = t0 + (kfix + 1) * dt
                h = t_new - t

            failed = 0
            if is_tsit:
                tsit5_stages(model, n, u, p, t, h, f0, K, unew, fnew)
                nf += 6
                if c.adaptive:
                    tsit5_err(n, h, f0, K, fnew, err)
            else:
                nj += 1
                nfac += 1
                failed = ros23_step(model, n, u, p, t, h, f0, c.adaptive, unew, fnew, err)
                if not failed:
                    nf += 2

            if c.adaptive:
                q = INFINITY if failed else error_q(n, err, u, unew, c.abstol, c.rtol)
                qc = q if q > 1e-4 else 1e-4
                fac = c.eta * pow(qc, -c.alpha) * pow(q_prev, c.beta)
                if q >= 1.0 and fac > c.eta:
                    fac = c.eta
                if fac < c.qmin:
                    fac = c.qmin
                elif fac > c.qmax:
                    fac = c.qmax
                h_next = fac * h
                if h_next > c.dtmax:
                    h_next = c.dtmax
                if q >= 1.0:
                    n_rej += 1
                    rejects += 1
                    if h_next >= h:
                        h_next = c.qmin * h
                    if rejects >= MAX_REJECTS or h_next < c.dtmin:
                        ret = RET_DTBELOWMIN
                        break
                    h = h_next
                    continue
                if h_next < c.dtmin:
                    h_next = c.dtmin
                q_prev = qc
                rejects = 0
            else:
                if failed:
                    ret = RET_DIVERGED
                    break
                h_next = h

            n_acc += 1
            if not _finite(n, unew):
                ret = RET_DIVERGED
                break
            if c.every:
                if k >= cap:
                    ret = RET_MAXITERS
                    break
                for i in range(n):
                    S[k * n + i] = unew[i]
                T[k] = t_new
                k += 1
            else:
                while k < cap:
                    tg = G[k]
                    if tg > t_new:
                        break
                    if tg == t_new:
                        for i in range(n):
                            S[k * n + i] = unew[i]
                    elif is_tsit:
                        tsit5_interp(n, u, h, f0, K, fnew, (tg - t) / h, S + k * n)
                    else:
                        hermite_interp(n, u, f0, unew, fnew, h, (tg - t) / h, S + k * n)
                    k += 1
            t = t_new
            swp = u
            u = unew
            unew = swp
            swp = f0
            f0 = fnew
            fnew = swp
            kfix += 1
            h = h_next

    out_len[0] = k
    out_tend[0] = t
    st[0] = n_acc
    st[1] = n_rej
    st[2] = nf
    st[3] = nj
    st[4] = nfac
    st[5] = 0
    return ret


# ----------------------------------------------------------------------------
# noise stream
# ----------------------------------------------------------------------------

cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = z + <uint64_t>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t traj, uint64_t sub) noexcept nogil:
    return mix64(mix64(mix64(seed) ^ traj) ^ sub)


cdef inline uint64_t counter_bits(uint64_t key, uint64_t step, uint64_t slot) noexcept nogil:
    return mix64(key ^ mix64((step << 16) | slot))


cdef inline double uniform01(uint64_t bits) noexcept nogil:
    return <double>((bits >> 11) + 1) * INV_2_53


cdef void normals(uint64_t key, uint64_t step, int m, double* z) noexcept nogil:
    cdef int pr
    cdef double u1, u2, r, a
    for pr in range((m + 1) // 2):
        u1 = uniform01(counter_bits(key, step, 2 * pr))
        u2 = uniform01(counter_bits(key, step, 2 * pr + 1))
        r = sqrt(-2.0 * log(u1))
        a = TWO_PI * u2
        z[2 * pr] = r * cos(a)
        if 2 * pr + 1 < m:
            z[2 * pr + 1] = r * sin(a)


# ----------------------------------------------------------------------------
# SDE steps and driver
# ----------------------------------------------------------------------------

cdef void em_step(int model, int n, int m, int diag, const real* u, const real* p, double t, double hd,
                  const real* dW, real* out) noexcept nogil:
    cdef int i, j
    cdef real h = <real>hd
    cdef real a[MAXN]
    cdef real g[MAXN * MAXN]
    cdef real s
    frhs(model, n, u, p, t, a)
    fdiff(model, n, m, u, p, t, g)
    if diag:
        for i in range(n):
            out[i] = u[i] + h * a[i] + g[i] * dW[i]
    else:
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += g[i * m + j] * dW[j]
            out[i] = u[i] + h * a[i] + s


cdef inline int _pair(int r, int j, int n) noexcept nogil:
    return r * (2 * n - r - 1) // 2 + (j - r - 1)


cdef void siea_step(int model, int n, const real* u, const real* p, double t, double hd, const real* dW,
                    const real* chi, const real* vs, real* out) noexcept nogil:
    cdef int i, j, r
    cdef real h = <real>hd
    cdef real a[MAXN]
    cdef real g[MAXN]
    cdef real am[MAXN]
    cdef real mid[MAXN]
    cdef real base[MAXN]
    cdef real w1[MAXN]
    cdef real w2[MAXN]
    cdef real gv[MAXN]
    cdef real sq, hh, inv_sq, gj, w, d, gp, gm, s1, s2, dr, hp, hm, v
    frhs(model, n, u, p, t, a)
    fdiff(model, n, n, u, p, t, g)
    sq = sqrt(h)
    hh = 0.5 * h
    for i in range(n):
        mid[i] = u[i] + hh * a[i] + g[i] * (0.5 * dW[i] + 0.5 * sq * chi[i])
    frhs(model, n, mid, p, t + 0.5 * hd, am)
    for i in range(n):
        base[i] = u[i] + h * a[i]
        out[i] = u[i] + h * am[i]
    inv_sq = 1.0 / sq
    for j in range(n):
        gj = g[j]
        w = dW[j]
        d = gj * sq
        for i in range(n):
            w1[i] = base[i]
            w2[i] = base[i]
        w1[j] = base[j] + d
        w2[j] = base[j] - d
        fdiff(model, n, n, w1, p, t, gv)
        gp = gv[j]
        fdiff(model, n, n, w2, p, t, gv)
        gm = gv[j]
        s1 = (gp + gm + 2.0 * gj) * w
        s2 = (gp - gm) * (w * w - h)
        for r in range(n):
            if r == j:
                continue
            dr = g[r] * sq
            for i in range(n):
                w1[i] = u[i]
                w2[i] = u[i]
            w1[r] = u[r] + dr
            w2[r] = u[r] - dr
            fdiff(model, n, n, w1, p, t, gv)
            hp = gv[j]
            fdiff(model, n, n, w2, p, t, gv)
            hm = gv[j]
            if r < j:
                v = vs[_pair(r, j, n)] * h
            else:
                v = -vs[_pair(j, r, n)] * h
            s1 += (hp + hm - 2.0 * gj) * w * inv_sq
            s2 += (hp - hm) * (w * dW[r] + v)
        out[j] = out[j] + 0.25 * s1 + 0.25 * s2 * inv_sq


cdef int sde_integrate(int model, int n, int m, int diag, const real* u0, const real* p, Cfg* c,
                       uint64_t seed, uint64_t traj, real* S, double* T, const double* G,
                       int64_t* out_len, double* out_tend, int64_t* st) noexcept nogil:
    cdef int i, ret = RET_SUCCESS, siea = c.algo == ALG_SIEA
    cdef int naux = n + n * (n - 1) // 2
    cdef real u[MAXN]
    cdef real unew[MAXN]
    cdef real dW[MAXN]
    cdef real aux[MAXAUX]
    cdef double z[MAXN + 1]
    cdef uint64_t kg = stream_key(seed, traj, 0)
    cdef uint64_t ka = stream_key(seed, traj, 1)
    cdef int64_t s, k = 1, n_acc = 0, nf = 0
    cdef double t = c.t0, t0 = c.t0, tf = c.tf, dt = c.dt0, t_new, h, sq, tg, th
    cdef int cap = c.cap
    for i in range(n):
        u[i] = u0[i]
        S[i] = u[i]
    if c.every:
        T[0] = t
    for s in range(c.nsteps):
        if s >= c.max_steps:
            ret = RET_MAXITERS
            break
        if s + 1 >= c.nsteps:
            t_new = tf
        else:
            t_new = t0 + (s + 1) * dt
        h = t_new - t
        sq = sqrt(h)
        normals(kg, <uint64_t>s, m, z)
        for i in range(m):
            dW[i] = z[i] * sq
        if siea:
            for i in range(naux):
                aux[i] = 1.0 if (counter_bits(ka, <uint64_t>s, i) >> 63) else -1.0
            siea_step(model, n, u, p, t, h, dW, aux, aux + n, unew)
            nf += 2
        else:
            em_step(model, n, m, diag, u, p, t, h, dW, unew)
            nf += 1
        n_acc += 1
        if not _finite(n, unew):
            ret = RET_DIVERGED
            break
        if c.every:
            if k >= cap:
                ret = RET_MAXITERS
                break
            for i in range(n):
                S[k * n + i] = unew[i]
            T[k] = t_new
            k += 1
        else:
            while k < cap and G[k] <= t_new:
                tg = G[k]
                if tg == t_new:
                    for i in range(n):
                        S[k * n + i] = unew[i]
                else:
                    th = (tg - t) / h
                    for i in range(n):
                        S[k * n + i] = (1.0 - th) * u[i] + th * unew[i]
                k += 1
        t = t_new
        for i in range(n):
            u[i] = unew[i]
    out_len[0] = k
    out_tend[0] = t
    st[0] = n_acc
    st[1] = 0
    st[2] = nf
    st[3] = 0
    st[4] = 0
    st[5] = 0
    return ret


# ----------------------------------------------------------------------------
# Python entry points
# ----------------------------------------------------------------------------

cdef Cfg _make_cfg(dict d):
    cdef Cfg c
    c.algo = d["algo"]
    c.adaptive = d["adaptive"]
    c.every = d["every"]
    c.cap = d["cap"]
    c.order = d["order"]
    c.max_steps = d["max_steps"]
    c.nsteps = d["nsteps"]
    c.t0 = d["t0"]
    c.tf = d["tf"]
    c.dt0 = d["dt0"]
    c.has_dt0 = d["has_dt0"]
    c.abstol = d["abstol"]
    c.rtol = d["rtol"]
    c.dtmin = d["dtmin"]
    c.dtmax = d["dtmax"]
    c.eta = d["eta"]
    c.alpha = d["alpha"]
    c.beta = d["beta"]
    c.qmin = d["qmin"]
    c.qmax = d["qmax"]
    return c


def ode_chunk(int model, dict cfg, real[:, ::1] U0, real[:, ::1] P, real[:, :, ::1] S, double[:, ::1] T,
              double[::1] G, int64_t[::1] L, int32_t[::1] R, double[::1] TE, int64_t[:, ::1] ST,
              Py_ssize_t lo, Py_ssize_t hi):
    """Integrate trajectories lo..hi-1 into their rows of the output buffers."""
    cdef Cfg c = _make_cfg(cfg)
    cdef int n = U0.shape[1]
    cdef Py_ssize_t i
    cdef double* tp
    if n > MAXN:
        raise ValueError("state dimension exceeds 32")
    with nogil:
        for i in range(lo, hi):
            tp = &T[i, 0] if c.every else NULL
            R[i] = ode_integrate(model, n, &U0[i, 0], &P[i, 0], &c, &S[i, 0, 0], tp, &G[0],
                                 &L[i], &TE[i], &ST[i, 0])


def sde_chunk(int model, dict cfg, int noise_dim, bint diagonal, real[:, ::1] U0, real[:, ::1] P,
              uint64_t[::1] seeds, real[:, :, ::1] S, double[:, ::1] T, double[::1] G, int64_t[::1] L,
              int32_t[::1] R, double[::1] TE, int64_t[:, ::1] ST, Py_ssize_t lo, Py_ssize_t hi):
    cdef Cfg c = _make_cfg(cfg)
    cdef int n = U0.shape[1]
    cdef Py_ssize_t i
    cdef double* tp
    if n > MAXN or noise_dim > MAXN:
        raise ValueError("dimension exceeds 32")
    with nogil:
        for i in range(lo, hi):
            tp = &T[i, 0] if c.every else NULL
            R[i] = sde_integrate(model, n, noise_dim, diagonal, &U0[i, 0], &P[i, 0], &c, seeds[i],
                                 <uint64_t>i, &S[i, 0, 0], tp, &G[0], &L[i], &TE[i], &ST[i, 0])


def block_rhs(int model, real[:, ::1] U, real[:, ::1] P, double t, real[:, ::1] out,
              Py_ssize_t lo, Py_ssize_t hi):
    """out[i] = f(U[i], P[i], t) for rows lo..hi-1."""
    cdef int n = U.shape[1]
    cdef Py_ssize_t i
    with nogil:
        for i in range(lo, hi):
            frhs(model, n, &U[i, 0], &P[i, 0], t, &out[i, 0])


def block_jac(int model, real[:, ::1] U, real[:, ::1] P, double t, real[:, :, ::1] J,
              Py_ssize_t lo, Py_ssize_t hi):
    cdef int n = U.shape[1]
    cdef Py_ssize_t i
    with nogil:
        for i in range(lo, hi):
            fjac(model, n, &U[i, 0], &P[i, 0], t, &J[i, 0, 0])


def block_lu(real[:, :, ::1] W, int32_t[:, ::1] piv, int32_t[::1] singular, Py_ssize_t lo, Py_ssize_t hi):
    """Factor each n×n block in place; pivots and singular flags per block."""
    cdef int n = W.shape[1]
    cdef Py_ssize_t i
    cdef int j
    cdef int pv[MAXN]
    with nogil:
        for i in range(lo, hi):
            singular[i] = lu_factor_inplace(n, &W[i, 0, 0], pv)
            for j in range(n):
                piv[i, j] = pv[j]


def block_solve(real[:, :, ::1] LU, int32_t[:, ::1] piv, real[:, ::1] B, real[:, ::1] X,
                Py_ssize_t lo, Py_ssize_t hi):
    cdef int n = LU.shape[1]
    cdef Py_ssize_t i
    cdef int j
    cdef int pv[MAXN]
    with nogil:
        for i in range(lo, hi):
            for j in range(n):
                pv[j] = piv[i, j]
            lu_solve_into(n, &LU[i, 0, 0], pv, &B[i, 0], &X[i, 0])


def diffusion(int model, int n, int m, real[::1] u, real[::1] p, double t, real[::1] out):
    fdiff(model, n, m, &u[0], &p[0], t, &out[0])


def random_normals(uint64_t seed, uint64_t traj, uint64_t step, int m):
    """The Gaussian draws a trajectory sees at ``step`` (for cross-checking)."""
    cdef double z[MAXN + 1]
    if m > MAXN:
        raise ValueError("m exceeds 32")
    normals(stream_key(seed, traj, 0), step, m, z)
    return [z[i] for i in range(m)]


def mix(uint64_t z):
    return mix64(z)


def wiener_endpoints(uint64_t[::1] seeds, int64_t nsteps, int m, double t0, double tf, double dt,
                     double[:, ::1] out):
    """W(tf) - W(t0) per trajectory, summed from the exact increments the SDE kernels draw."""
    cdef Py_ssize_t i
    cdef int64_t s
    cdef int j
    cdef uint64_t key
    cdef double t, t_new, sq
    cdef double z[MAXN + 1]
    if m > MAXN:
        raise ValueError("m exceeds 32")
    with nogil:
        for i in range(seeds.shape[0]):
            key = stream_key(seeds[i], <uint64_t>i, 0)
            for j in range(m):
                out[i, j] = 0.0
            t = t0
            for s in range(nsteps):
                t_new = tf if s + 1 >= nsteps else t0 + (s + 1) * dt
                sq = sqrt(t_new - t)
                normals(key, <uint64_t>s, m, z)
                for j in range(m):
                    out[i, j] += z[j] * sq
                t = t_new
