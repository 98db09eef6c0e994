"""Pure numpy fallback with the same signatures as the compiled kernels."""
import numpy as np


def csr_matvec(indptr, indices, data, x, out, nthreads=1):
    prod = np.asarray(data) * np.asarray(x)[np.asarray(indices)]
    counts = np.diff(indptr)
    out[:] = 0.0
    nonempty = counts > 0
    if prod.size:
        sums = np.add.reduceat(prod, np.asarray(indptr)[:-1][nonempty])
        out[nonempty] = sums


def pcg(indptr, indices, data, b, x, dinv, tol, maxiter, nthreads=1):
    b = np.asarray(b)
    n = b.shape[0]
    q = np.empty(n)
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, -1
    csr_matvec(indptr, indices, data, x, q)
    r = b - q
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    rnorm = float(np.sqrt(r @ r)) / bnorm
    it = 0
    while rnorm > tol and it < maxiter:
        csr_matvec(indptr, indices, data, p, q)
        pap = float(p @ q)
        if pap <= 0.0:
            return it, rnorm, it
        alpha = rz / pap
        x += alpha * p
        r -= alpha * q
        z = dinv * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
        it += 1
        rnorm = float(np.sqrt(r @ r)) / bnorm
    return it, rnorm, -1
