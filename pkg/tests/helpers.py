"""Shared oracles for the test suite: finite differences, quadrature of
the von Mises-Fisher cosine marginal, and relative error metrics, all
independent of the library code paths they check."""

import numpy as np


def vmf_cosine_quadrature(kappa, sphere_dim, n_grid=40001):
    """Normalized density, CDF callable, and mean of the marginal of
    w = mu^T x, with density proportional to
    exp(kappa w) (1 - w^2)^{(sphere_dim - 2)/2}, by trapezoid quadrature
    in log space."""
    w = np.linspace(-1.0, 1.0, n_grid)
    exponent = (sphere_dim - 2) / 2.0
    with np.errstate(divide="ignore"):
        log_f = kappa * w
        if exponent != 0.0:
            log_f = log_f + exponent * np.log1p(-(w**2))
    log_f -= log_f.max()
    f = np.exp(log_f)
    z = np.trapezoid(f, w)
    f /= z
    cdf_grid = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) / 2.0 * np.diff(w))])
    cdf_grid /= cdf_grid[-1]
    mean = np.trapezoid(w * f, w)

    def cdf(x):
        return np.interp(x, w, cdf_grid)

    return f, cdf, mean


def rel_err(a, b, floor=1e-4):
    """Max relative error with an absolute floor on the denominator: the
    central-difference oracle itself carries ~eps/h = 1e-10 of roundoff
    per entry, so entries far below the floor cannot be certified to a
    tighter relative tolerance and are compared against the floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)


def central_diff(f, x, h=1e-6):
    """Gradient of a scalar function of a flat array by central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = f(x)
        xf[i] = orig - h
        down = f(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def fd_network_grads(params, loss_fn, h=1e-6):
    """Central finite differences of ``loss_fn(params)`` in every weight
    and bias entry, returned as (weights list, biases list)."""
    gw, gb = [], []
    for arr_list, out in ((params.weights, gw), (params.biases, gb)):
        for arr in arr_list:
            g = np.zeros_like(arr)
            flat_arr = arr.ravel()
            flat_g = g.ravel()
            for i in range(flat_arr.size):
                orig = flat_arr[i]
                flat_arr[i] = orig + h
                up = loss_fn(params)
                flat_arr[i] = orig - h
                down = loss_fn(params)
                flat_arr[i] = orig
                flat_g[i] = (up - down) / (2.0 * h)
            out.append(g)
    return gw, gb


def fd_symmetric_grad(f, p, h=1e-6):
    """Gradient of a scalar function of a symmetric matrix with the
    convention dL = <G, dP>_F over symmetric perturbations."""
    p = np.asarray(p, dtype=np.float64).copy()
    d = p.shape[0]
    g = np.zeros_like(p)
    for i in range(d):
        for j in range(i, d):
            e = np.zeros_like(p)
            e[i, j] = 1.0
            e[j, i] = 1.0
            up = f(p + h * e)
            down = f(p - h * e)
            deriv = (up - down) / (2.0 * h)
            if i == j:
                g[i, i] = deriv
            else:
                # dL/dh = 2 G_ij for the symmetric pair perturbation
                g[i, j] = deriv / 2.0
                g[j, i] = deriv / 2.0
    return g
