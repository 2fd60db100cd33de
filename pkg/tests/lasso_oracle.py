"""Finite Lasso on a fixed grid solved by scikit-learn, used as an independent oracle."""
import numpy as np
from sklearn.linear_model import Lasso


def grid_lasso(draw, y, lam, grid):
    """Minimize ``1/(2m)|Phi a - y|^2 + lam |a|_1`` over amplitudes on ``grid``.

    The complex residual is split into real and imaginary rows.  sklearn scales
    its quadratic by ``1/(2 n_samples)`` with ``n_samples = 2m``, hence ``alpha = lam/2``.
    Returns ``(amplitudes, objective)``.
    """
    Phi = draw.features(grid).T  # (m, n)
    A = np.vstack([Phi.real, Phi.imag])
    b = np.concatenate([np.real(y), np.imag(y)])
    model = Lasso(alpha=lam / 2, fit_intercept=False, tol=1e-12, max_iter=1_000_000,
                  precompute=True)
    model.fit(A, b)
    a = model.coef_.copy()
    r = Phi @ a - y
    obj = 0.5 * np.mean(np.abs(r) ** 2) + lam * np.abs(a).sum()
    return a, float(obj)
